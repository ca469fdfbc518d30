"""Evaluation harness: drives a model backend over a benchmark package and
aggregates a per-(dimension, language) report.

MCQ items run under one of two protocols: Direct (the model is prompted to
output the correct option; a tolerant parser accepts "A", "A.", "(A)",
"Option A", or the full option text verbatim) or AlignerAssisted (the raw
free-text response plus the options go to an aligner backend that returns an
index).  Unparseable or failed answers score wrong by default — skipping
them would inflate weak models — with an opt-in skip flag.

The tagged-transcription task sends each reference's audio with a tagging
prompt and scores the response against the tagged reference (uniform-token
alignment; see metrics).  The report's Avg is the unweighted mean over
present cells only; absent cells render as "--".
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum

from .backends import (
    DEFAULT_RETRIES,
    BackendUnavailableError,
    UnparseableResponseError,
    call_with_retries,
)
from .metrics import MalformedTagError, PataScore, compute_pata, mean_pata
from .schema import Dimension, Language
from .vocab import DEFAULT_TAG_VOCABULARY

logger = logging.getLogger(__name__)

DEFAULT_TPT_PROMPT = (
    "Transcribe this speech exactly, inserting paralinguistic tags such as "
    "<Laughter> or <Crying> at the precise locations where they occur. "
    "Output only the tagged transcription."
)


class Protocol(str, Enum):
    DIRECT = "direct"
    ALIGNER_ASSISTED = "aligner"


@dataclass
class ModelAnswer:
    item_id: str
    raw_text: str
    chosen_index: int | None = None    # direct protocol
    aligned_index: int | None = None   # aligner protocol
    error: str | None = None

    def index(self) -> int | None:
        if self.chosen_index is not None and self.aligned_index is not None:
            raise ValueError(f"{self.item_id}: both chosen and aligned index set")
        return self.chosen_index if self.chosen_index is not None else self.aligned_index


_LETTER_FORM = re.compile(r"\(?([A-Za-z])\)?\.?")


def parse_choice(raw: str, options: list[str]) -> int | None:
    """Tolerant option parser: "A", "A.", "(A)", "Option A", or the full
    option text (exact).  Anything else is unparseable -> None."""
    text = str(raw).strip()
    candidate = text
    if candidate.lower().startswith("option "):
        candidate = candidate[len("option "):].strip()
    match = _LETTER_FORM.fullmatch(candidate)
    if match:
        index = ord(match.group(1).upper()) - ord("A")
        if 0 <= index < len(options):
            return index
    for index, option in enumerate(options):
        if text == option.strip():
            return index
    return None


# ── MCQ evaluation ───────────────────────────────────────────────────────────

def answer_key(package) -> dict:
    """item_id -> {dimension, language, answer_index, options}."""
    key = {}
    for (dim, lang), items in package.items.items():
        for item in items:
            key[item.item_id] = {
                "dimension": dim,
                "language": lang,
                "answer_index": item.answer_index,
                "options": [o.text for o in item.options],
            }
    return key


def run_mcq_eval(
    package,
    model,
    protocol: Protocol = Protocol.DIRECT,
    aligner=None,
    *,
    retries: int = DEFAULT_RETRIES,
    backoff_s: float = 0.05,
) -> list[ModelAnswer]:
    """One ModelAnswer per MCQ item.  Backend failures are isolated per item
    (logged, answer carries .error, scores wrong unless skipped)."""
    protocol = Protocol(protocol)
    if protocol is Protocol.ALIGNER_ASSISTED and aligner is None:
        raise ValueError("AlignerAssisted protocol requires an aligner client")

    answers: list[ModelAnswer] = []
    for (dim, lang), items in sorted(
        package.items.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
    ):
        for item in items:
            options = [o.text for o in item.options]
            try:
                raw = call_with_retries(
                    model.choose, item.audio, item.stem, options, item.item_id,
                    retries=retries, backoff_s=backoff_s,
                )
            except (BackendUnavailableError, UnparseableResponseError) as exc:
                logger.warning("model failed on %s: %s", item.item_id, exc)
                answers.append(ModelAnswer(item.item_id, "", error=str(exc)))
                continue
            raw = str(raw)
            answer = ModelAnswer(item.item_id, raw)
            if protocol is Protocol.DIRECT:
                answer.chosen_index = parse_choice(raw, options)
                if answer.chosen_index is None:
                    logger.info("unparseable answer on %s: %r", item.item_id, raw)
            else:
                try:
                    answer.aligned_index = call_with_retries(
                        aligner.align, raw, options,
                        retries=retries, backoff_s=backoff_s,
                    )
                except (BackendUnavailableError, UnparseableResponseError) as exc:
                    logger.warning("aligner failed on %s: %s", item.item_id, exc)
                    answer.error = str(exc)
            answers.append(answer)
    return answers


@dataclass
class Cell:
    value: float            # accuracy or mean PATA, in [0, 1]
    n: int                  # items contributing
    correct: int | None = None   # MCQ cells only

    def to_dict(self) -> dict:
        doc = {"value": self.value, "n": self.n}
        if self.correct is not None:
            doc["correct"] = self.correct
        return doc


def score_accuracy(
    answers: list[ModelAnswer],
    key: dict,
    *,
    skip_unparseable: bool = False,
) -> dict:
    """(Dimension, Language) -> Cell with correct/total accuracy.  Answers
    without a usable index count as wrong, or drop out of the denominator
    when skip_unparseable is set."""
    tallies: dict[tuple, list[int]] = {}
    for answer in answers:
        entry = key.get(answer.item_id)
        if entry is None:
            raise KeyError(f"answer for unknown item {answer.item_id!r}")
        stratum = (entry["dimension"], entry["language"])
        tally = tallies.setdefault(stratum, [0, 0])
        index = answer.index()
        if index is None and skip_unparseable:
            continue
        tally[1] += 1
        if index == entry["answer_index"]:
            tally[0] += 1
    return {
        stratum: Cell(value=c / t, n=t, correct=c)
        for stratum, (c, t) in tallies.items()
        if t > 0
    }


# ── tagged-transcription evaluation ──────────────────────────────────────────

def run_tpt_eval(
    package,
    model,
    prompt: str = DEFAULT_TPT_PROMPT,
    *,
    alpha: float = 0.5,
    vocabulary=DEFAULT_TAG_VOCABULARY,
    retries: int = DEFAULT_RETRIES,
    backoff_s: float = 0.05,
) -> tuple[dict, dict]:
    """Returns (item_id -> PataScore, (TPT, language) -> Cell).  A failed or
    malformed response scores as an empty transcription."""
    scores: dict[str, PataScore] = {}
    cells: dict[tuple, Cell] = {}
    for lang, refs in sorted(package.tpt_refs.items(), key=lambda kv: kv[0].value):
        lang_scores = []
        for ref in refs:
            try:
                raw = call_with_retries(
                    model.transcribe_tagged, ref["audio"], prompt, ref["item_id"],
                    retries=retries, backoff_s=backoff_s,
                )
            except (BackendUnavailableError, UnparseableResponseError) as exc:
                logger.warning("model failed on %s: %s", ref["item_id"], exc)
                raw = ""
            try:
                score = compute_pata(
                    ref["reference_tagged"], str(raw), lang,
                    alpha=alpha, vocabulary=vocabulary,
                )
            except MalformedTagError as exc:
                logger.info("malformed tagging on %s (%s); scoring as empty",
                            ref["item_id"], exc)
                score = compute_pata(
                    ref["reference_tagged"], "", lang,
                    alpha=alpha, vocabulary=vocabulary,
                )
            scores[ref["item_id"]] = score
            lang_scores.append(score)
        if lang_scores:
            cells[(Dimension.TPT, lang)] = Cell(
                value=mean_pata(lang_scores), n=len(lang_scores)
            )
    return scores, cells


# ── aggregation and rendering ────────────────────────────────────────────────

AVG_MODES = ("cells", "tasks")


@dataclass
class EvalReport:
    cells: dict = field(default_factory=dict)    # (Dimension, Language) -> Cell
    avg: float = 0.0
    avg_mode: str = "cells"
    missing_cells: list = field(default_factory=list)

    def to_dict(self) -> dict:
        by_dim: dict[str, dict] = {}
        for (dim, lang), cell in self.cells.items():
            by_dim.setdefault(dim.value, {})[lang.value] = cell.to_dict()
        return {
            "cells": by_dim,
            "avg": self.avg,
            "avg_mode": self.avg_mode,
            "missing_cells": list(self.missing_cells),
            "note": "avg is the unweighted mean over present cells only",
        }

    def render_markdown(self) -> str:
        lines = [
            "| Task | ZH | EN |",
            "| --- | --- | --- |",
        ]
        for dim in Dimension:
            row = [dim.value]
            for lang in (Language.ZH, Language.EN):
                cell = self.cells.get((dim, lang))
                row.append("--" if cell is None else f"{100 * cell.value:.1f}")
            lines.append("| " + " | ".join(row) + " |")
        lines.append(f"| **Avg** | {100 * self.avg:.1f} | |" if self.cells else "| **Avg** | -- | |")
        lines.append("")
        lines.append(f"Avg is the unweighted mean over present cells (mode: {self.avg_mode}).")
        return "\n".join(lines) + "\n"


def aggregate_report(cells: dict, avg_mode: str = "cells") -> EvalReport:
    """Normalize cells, compute the mean over present cells (mode "cells"),
    or per-task first (mode "tasks"), and list what's missing."""
    if avg_mode not in AVG_MODES:
        raise ValueError(f"avg_mode must be one of {AVG_MODES}")
    normalized: dict[tuple, Cell] = {}
    for (dim, lang), cell in cells.items():
        if cell is None:
            continue
        if not isinstance(cell, Cell):
            cell = Cell(value=float(cell), n=0)
        if not 0.0 <= cell.value <= 1.0:
            raise ValueError(f"cell {dim}/{lang} out of range: {cell.value}")
        normalized[(Dimension(dim), Language.parse(lang))] = cell

    missing = [
        f"{dim.value}/{lang.value}"
        for dim in Dimension
        for lang in (Language.ZH, Language.EN)
        if (dim, lang) not in normalized
    ]

    if not normalized:
        avg = 0.0
    elif avg_mode == "cells":
        avg = sum(c.value for c in normalized.values()) / len(normalized)
    else:
        per_task = []
        for dim in Dimension:
            values = [
                normalized[(dim, lang)].value
                for lang in (Language.ZH, Language.EN)
                if (dim, lang) in normalized
            ]
            if values:
                per_task.append(sum(values) / len(values))
        avg = sum(per_task) / len(per_task)

    return EvalReport(cells=normalized, avg=avg, avg_mode=avg_mode, missing_cells=missing)


@dataclass
class EvalRun:
    report: EvalReport
    answers: list = field(default_factory=list)        # ModelAnswer
    pata_scores: dict = field(default_factory=dict)    # item_id -> PataScore

    def to_dict(self) -> dict:
        return {
            "report": self.report.to_dict(),
            "answers": [
                {
                    "item_id": a.item_id,
                    "raw_text": a.raw_text,
                    "chosen_index": a.chosen_index,
                    "aligned_index": a.aligned_index,
                    "error": a.error,
                }
                for a in self.answers
            ],
            "pata": {item_id: s.to_dict() for item_id, s in self.pata_scores.items()},
        }


def evaluate_package(
    package,
    model,
    protocol: Protocol = Protocol.DIRECT,
    aligner=None,
    *,
    skip_unparseable: bool = False,
    avg_mode: str = "cells",
    tpt_prompt: str = DEFAULT_TPT_PROMPT,
    alpha: float = 0.5,
    vocabulary=DEFAULT_TAG_VOCABULARY,
    retries: int = DEFAULT_RETRIES,
    backoff_s: float = 0.05,
) -> EvalRun:
    """Full harness pass: MCQ under the chosen protocol, tagged
    transcription, then one aggregated report."""
    answers = run_mcq_eval(
        package, model, protocol, aligner, retries=retries, backoff_s=backoff_s,
    )
    cells = score_accuracy(answers, answer_key(package), skip_unparseable=skip_unparseable)
    pata_scores, tpt_cells = run_tpt_eval(
        package, model, tpt_prompt,
        alpha=alpha, vocabulary=vocabulary, retries=retries, backoff_s=backoff_s,
    )
    cells.update(tpt_cells)
    report = aggregate_report(cells, avg_mode=avg_mode)
    return EvalRun(report=report, answers=answers, pata_scores=pata_scores)
