"""Tokenization, Levenshtein alignment, WER/CER, and the PATA composite.

Reference and hypothesis strings are first lowered into a *uniform* token
sequence in which plain text (words for English, individual characters for
Chinese) and inline paralinguistic tags (``<Laughter>``) are both ordinary
sequence tokens.  All scoring is positional over that sequence:

    PATA = alpha * max(0, 1 - ERR_text) + (1 - alpha) * F1_para

where ERR_text is WER (en) / CER (zh) over the tag-stripped texts and
F1_para is the tag F1 under the Match-pairing rule implemented by
``score_tags``.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from enum import Enum

from .vocab import TagVocabulary, DEFAULT_TAG_VOCABULARY


class MalformedTagError(ValueError):
    """A '<' opened a tag span that never closes (or nests another '<')."""


class TokenKind(str, Enum):
    TEXT = "Text"
    TAG = "Tag"


@dataclass(frozen=True)
class UniformToken:
    kind: TokenKind
    value: str

    def __repr__(self):  # compact: Text:hello / Tag:Laughter
        return f"{self.kind.value}:{self.value}"


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _en_words(segment: str) -> list[str]:
    words = []
    for raw in segment.split():
        word = "".join(ch for ch in raw if not _is_punct(ch)).casefold()
        if word:
            words.append(word)
    return words


def _zh_chars(segment: str) -> list[str]:
    segment = unicodedata.normalize("NFC", segment)
    return [ch for ch in segment if not ch.isspace() and not _is_punct(ch)]


def tokenize(
    text: str,
    language: str,
    vocabulary: TagVocabulary = DEFAULT_TAG_VOCABULARY,
) -> list[UniformToken]:
    """Split tagged text into the uniform token sequence.

    en: whitespace-delimited, punctuation-stripped, case-folded words.
    zh: individual NFC-normalized characters, whitespace/punctuation dropped.
    ``<Name>`` spans become Tag tokens at their positions; known names are
    canonicalized case-insensitively, unknown names keep a stable normalized
    form (so fabricated tags in model output remain scorable, and never match
    a reference category).
    """
    lang = str(getattr(language, "value", language)).lower()
    if lang not in ("en", "zh"):
        raise ValueError(f"unsupported language: {language!r}")
    to_text = _en_words if lang == "en" else _zh_chars

    tokens: list[UniformToken] = []
    pos = 0
    while pos < len(text):
        open_at = text.find("<", pos)
        if open_at == -1:
            segment = text[pos:]
            tokens.extend(UniformToken(TokenKind.TEXT, w) for w in to_text(segment))
            break
        tokens.extend(UniformToken(TokenKind.TEXT, w) for w in to_text(text[pos:open_at]))
        close_at = text.find(">", open_at + 1)
        if close_at == -1:
            raise MalformedTagError(f"unclosed tag at offset {open_at}: {text[open_at:open_at + 20]!r}")
        name = text[open_at + 1:close_at]
        if "<" in name or not name.strip():
            raise MalformedTagError(f"malformed tag at offset {open_at}: {text[open_at:close_at + 1]!r}")
        tokens.append(UniformToken(TokenKind.TAG, vocabulary.normalize(name)))
        pos = close_at + 1
    return tokens


def text_only(tokens: list[UniformToken]) -> list[UniformToken]:
    """Drop Tag tokens, keeping the plain-text subsequence."""
    return [t for t in tokens if t.kind is TokenKind.TEXT]


# ── Levenshtein alignment ────────────────────────────────────────────────────

class EditOp(str, Enum):
    MATCH = "Match"
    SUBSTITUTE = "Substitute"
    DELETE = "Delete"
    INSERT = "Insert"


@dataclass(frozen=True)
class AlignmentStep:
    op: EditOp
    ref_index: int | None   # index into reference tokens (None for Insert)
    hyp_index: int | None   # index into hypothesis tokens (None for Delete)


@dataclass
class Alignment:
    """Ordered edit script taking the reference sequence to the hypothesis."""

    steps: list[AlignmentStep] = field(default_factory=list)

    @property
    def cost(self) -> int:
        return sum(1 for s in self.steps if s.op is not EditOp.MATCH)

    def apply(self, ref: list, hyp: list) -> list:
        """Replay the script against ref, drawing inserted/substituted tokens
        from hyp; the result must equal hyp (tested invariant)."""
        out = []
        for s in self.steps:
            if s.op is EditOp.MATCH:
                out.append(ref[s.ref_index])
            elif s.op in (EditOp.SUBSTITUTE, EditOp.INSERT):
                out.append(hyp[s.hyp_index])
            # Delete contributes nothing
        return out


def edit_distance(ref: list, hyp: list) -> tuple[int, Alignment]:
    """Minimal unit-cost Levenshtein distance plus one deterministic alignment.

    Backtrace tie precedence: Match > Substitute > Delete > Insert.
    """
    n, m = len(ref), len(hyp)
    # full DP table; sequences here are utterance-sized, not documents
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row = d[i]
        prev = d[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (0 if ri == hyp[j - 1] else 1)
            dele = prev[j] + 1
            ins = row[j - 1] + 1
            best = sub
            if dele < best:
                best = dele
            if ins < best:
                best = ins
            row[j] = best

    steps: list[AlignmentStep] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and d[i][j] == d[i - 1][j - 1]:
            steps.append(AlignmentStep(EditOp.MATCH, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + 1:
            steps.append(AlignmentStep(EditOp.SUBSTITUTE, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            steps.append(AlignmentStep(EditOp.DELETE, i - 1, None))
            i = i - 1
        else:
            steps.append(AlignmentStep(EditOp.INSERT, None, j - 1))
            j = j - 1
    steps.reverse()
    return d[n][m], Alignment(steps)


# ── Error rate and tag F1 ────────────────────────────────────────────────────

def compute_err(ref_text: str, hyp_text: str, language: str,
                vocabulary: TagVocabulary = DEFAULT_TAG_VOCABULARY) -> float:
    """WER (en) / CER (zh) with all paralinguistic tags stripped first.

    Denominator is clamped to max(1, |ref tokens|), so the value may
    exceed 1 and an empty reference never divides by zero.
    """
    ref_tokens = text_only(tokenize(ref_text, language, vocabulary))
    hyp_tokens = text_only(tokenize(hyp_text, language, vocabulary))
    distance, _ = edit_distance(ref_tokens, hyp_tokens)
    return distance / max(1, len(ref_tokens))


def score_tags(ref: list[UniformToken], hyp: list[UniformToken]) -> tuple[int, int, int, float]:
    """Tag (tp, fp, fn, f1) over the full uniform sequences.

    A hypothesis tag is a true positive iff the deterministic alignment
    pairs it as a Match with a reference tag — Match implies identical
    category, so a category mismatch surfaces as one FP plus one FN.
    Both sides tag-free scores f1 = 1 (controls reward silence).
    """
    ref_tags = sum(1 for t in ref if t.kind is TokenKind.TAG)
    hyp_tags = sum(1 for t in hyp if t.kind is TokenKind.TAG)
    if ref_tags == 0 and hyp_tags == 0:
        return 0, 0, 0, 1.0
    _, alignment = edit_distance(ref, hyp)
    tp = sum(
        1 for s in alignment.steps
        if s.op is EditOp.MATCH and ref[s.ref_index].kind is TokenKind.TAG
    )
    fp = hyp_tags - tp
    fn = ref_tags - tp
    f1 = (2 * tp) / (2 * tp + fp + fn)
    return tp, fp, fn, f1


@dataclass(frozen=True)
class PataScore:
    """Decomposed composite score (one utterance)."""

    err_text: float          # WER/CER over tag-stripped text, may exceed 1
    text_component: float    # max(0, 1 - err_text)
    tag_tp: int
    tag_fp: int
    tag_fn: int
    f1_para: float
    alpha: float
    pata: float

    def to_dict(self) -> dict:
        return {
            "err_text": self.err_text,
            "text_component": self.text_component,
            "tag_tp": self.tag_tp,
            "tag_fp": self.tag_fp,
            "tag_fn": self.tag_fn,
            "f1_para": self.f1_para,
            "alpha": self.alpha,
            "pata": self.pata,
        }


def compute_pata(
    ref_tagged: str,
    hyp_tagged: str,
    language: str,
    alpha: float = 0.5,
    vocabulary: TagVocabulary = DEFAULT_TAG_VOCABULARY,
) -> PataScore:
    """Assemble the composite score from compute_err and score_tags."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    ref_tokens = tokenize(ref_tagged, language, vocabulary)
    hyp_tokens = tokenize(hyp_tagged, language, vocabulary)
    ref_text = text_only(ref_tokens)
    hyp_text = text_only(hyp_tokens)
    distance, _ = edit_distance(ref_text, hyp_text)
    err = distance / max(1, len(ref_text))
    text_component = max(0.0, 1.0 - err)
    tp, fp, fn, f1 = score_tags(ref_tokens, hyp_tokens)
    return PataScore(
        err_text=err,
        text_component=text_component,
        tag_tp=tp,
        tag_fp=fp,
        tag_fn=fn,
        f1_para=f1,
        alpha=alpha,
        pata=alpha * text_component + (1.0 - alpha) * f1,
    )


def mean_pata(scores: list[PataScore]) -> float:
    """Corpus-level value: mean of per-utterance scores (aggregation over
    pooled counts would be the alternative; the per-utterance mean matches
    how per-task accuracy is averaged)."""
    if not scores:
        return 0.0
    return sum(s.pata for s in scores) / len(scores)
