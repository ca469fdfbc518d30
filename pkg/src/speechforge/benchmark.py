"""Benchmark package builder.

Turns validated (and quality-annotated) manifests into an evaluable package:
admission filtering (transcription error strictly below 0.10 AND duration at
least 3.0 s inclusive), per-(dimension, language) stratified sampling, MCQ
generation with typed distractors behind a pluggable backend, control-sample
injection for the tagged-transcription task, and a deterministic on-disk
layout:

    <dim>/<lang>/items.jsonl      one MCQ item per line (13 dimensions)
    tpt/<lang>/refs.jsonl         tagged-transcription references + controls
    controls.jsonl                registry of control item ids
    provenance.jsonl              build metadata, drops, and counts
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .backends import (
    DEFAULT_RETRIES,
    BackendUnavailableError,
    UnparseableResponseError,
    call_with_retries,
)
from .schema import (
    Dimension,
    Language,
    ManifestEntry,
    emit_record,
)

logger = logging.getLogger(__name__)

MCQ_DIMENSIONS = tuple(d for d in Dimension if d is not Dimension.TPT)

ERR_THRESHOLD = 0.10          # strict: exactly 0.10 is rejected
MIN_DURATION_S = 3.0          # inclusive: exactly 3.0 s is admitted
DEFAULT_CONTROL_FRACTION = 0.2
DEFAULT_N_OPTIONS = 5


class GenerationInvalidError(ValueError):
    """MCQ generation kept violating item invariants after retries."""

    def __init__(self, reason: str, message: str = ""):
        super().__init__(message or reason)
        self.reason = reason


class OptionClass(str, Enum):
    GROUND_TRUTH = "GroundTruth"
    FINE_GRAINED_ACOUSTIC = "FineGrainedAcoustic"
    SEMANTIC_TRAP = "SemanticTrap"
    OTHER = "Other"


@dataclass(frozen=True)
class Option:
    text: str
    klass: OptionClass

    def to_dict(self) -> dict:
        return {"text": self.text, "klass": self.klass.value}


@dataclass
class McqItem:
    item_id: str
    dimension: Dimension
    language: Language
    audio: str
    stem: str
    options: list[Option]
    answer_index: int
    source_utterance_id: str

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "dimension": self.dimension.value,
            "language": self.language.value,
            "audio": self.audio,
            "stem": self.stem,
            "options": [o.to_dict() for o in self.options],
            "answer_index": self.answer_index,
            "source_utterance_id": self.source_utterance_id,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "McqItem":
        return cls(
            item_id=doc["item_id"],
            dimension=Dimension(doc["dimension"]),
            language=Language(doc["language"]),
            audio=doc["audio"],
            stem=doc["stem"],
            options=[Option(o["text"], OptionClass(o["klass"])) for o in doc["options"]],
            answer_index=int(doc["answer_index"]),
            source_utterance_id=doc["source_utterance_id"],
        )


def validate_item(item: McqItem) -> None:
    """Enforce the MCQ invariants; raises GenerationInvalidError."""
    if item.dimension is Dimension.TPT:
        raise GenerationInvalidError("BadDimension", "TPT is not an MCQ dimension")
    if len(item.options) < 4:
        raise GenerationInvalidError(
            "TooFewOptions", f"{len(item.options)} options (need >= 4)"
        )
    keys = [i for i, o in enumerate(item.options) if o.klass is OptionClass.GROUND_TRUTH]
    if len(keys) == 0:
        raise GenerationInvalidError("NoKey", "no option flagged GroundTruth")
    if len(keys) > 1:
        raise GenerationInvalidError("MultipleKeys", f"{len(keys)} options flagged GroundTruth")
    if keys[0] != item.answer_index:
        raise GenerationInvalidError(
            "KeyIndexMismatch",
            f"answer_index {item.answer_index} but GroundTruth at {keys[0]}",
        )
    texts = [o.text.strip() for o in item.options]
    if len(set(texts)) != len(texts):
        raise GenerationInvalidError("DuplicateOption", "option texts not pairwise distinct")
    if not item.stem.strip():
        raise GenerationInvalidError("EmptyStem", "stem is empty")


# ── admission ────────────────────────────────────────────────────────────────

def entry_err(entry: ManifestEntry) -> float | None:
    """Measured transcription error for an entry, if the quality map (written
    by the cross-validation cascade) carries one."""
    quality = entry.quality or {}
    verdict = quality.get("transcription_error") or {}
    score = verdict.get("score")
    return float(score) if isinstance(score, (int, float)) else None


def admit_candidates(
    entries: list[ManifestEntry],
    err_threshold: float = ERR_THRESHOLD,
    min_duration_s: float = MIN_DURATION_S,
    *,
    require_err: bool = False,
) -> list[ManifestEntry]:
    """Keep iff err < err_threshold (strict) AND duration >= min_duration_s
    (inclusive).  Entries without a measured err pass the error criterion
    vacuously unless require_err is set."""
    admitted = []
    for entry in entries:
        err = entry_err(entry)
        if err is None:
            err_ok = not require_err
        else:
            err_ok = err < err_threshold
        duration_ok = entry.record.duration_s >= min_duration_s
        if err_ok and duration_ok:
            admitted.append(entry)
        else:
            logger.debug(
                "rejected %s: err=%s (< %s required), duration=%s (>= %s required)",
                entry.record.utterance_id, err, err_threshold,
                entry.record.duration_s, min_duration_s,
            )
    return admitted


def _admissible(entry: ManifestEntry, err_threshold: float = ERR_THRESHOLD,
                min_duration_s: float = MIN_DURATION_S) -> bool:
    err = entry_err(entry)
    if err is not None and err >= err_threshold:
        return False
    return entry.record.duration_s >= min_duration_s


# ── stratified sampling ──────────────────────────────────────────────────────

def normalize_targets(doc: dict) -> dict[tuple[Dimension, Language], int]:
    """Accept {"GEN": {"zh": 932, "en": 911}} or flat {"GEN/zh": 932}."""
    targets: dict[tuple[Dimension, Language], int] = {}
    for key, value in doc.items():
        if isinstance(value, dict):
            for lang, count in value.items():
                targets[(Dimension(key), Language.parse(lang))] = int(count)
        else:
            dim, _, lang = str(key).partition("/")
            if not lang:
                raise ValueError(f"flat target key must be DIM/lang, got {key!r}")
            targets[(Dimension(dim), Language.parse(lang))] = int(value)
    return targets


@dataclass
class StratifiedSample:
    by_stratum: dict = field(default_factory=dict)   # (Dimension, Language) -> entries
    shortfalls: list = field(default_factory=list)

    def total(self) -> int:
        return sum(len(v) for v in self.by_stratum.values())


def stratified_sample(
    admitted: list[ManifestEntry],
    targets: dict[tuple[Dimension, Language], int],
    seed: int,
) -> StratifiedSample:
    """Seeded draw of min(target, available) per (dimension, language)
    stratum; shortfalls reported, never padded."""
    sample = StratifiedSample()
    by_language: dict[Language, list[ManifestEntry]] = {}
    for entry in admitted:
        by_language.setdefault(entry.record.language, []).append(entry)
    for pool in by_language.values():
        pool.sort(key=lambda e: e.record.utterance_id)

    for (dim, lang), target in sorted(
        targets.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
    ):
        pool = by_language.get(lang, [])
        rng = random.Random(f"{seed}:{dim.value}:{lang.value}")
        drawn = rng.sample(pool, k=min(target, len(pool)))
        sample.by_stratum[(dim, lang)] = drawn
        if len(drawn) < target:
            sample.shortfalls.append({
                "dimension": dim.value,
                "language": lang.value,
                "target": target,
                "available": len(pool),
                "drawn": len(drawn),
            })
    return sample


# ── MCQ generation ───────────────────────────────────────────────────────────

def generate_mcq(
    record,
    dimension: Dimension,
    client,
    n_options: int = DEFAULT_N_OPTIONS,
    *,
    seed: int = 0,
    semantic_conflict: bool = False,
    retries: int = DEFAULT_RETRIES,
    backoff_s: float = 0.05,
) -> McqItem:
    """One validated MCQ item for (record, dimension).  The backend proposes
    stem + typed options; validation and seeded answer-position shuffling
    happen locally.  Raises GenerationInvalidError after `retries` invalid
    generations."""
    dimension = Dimension(dimension)
    if dimension is Dimension.TPT:
        raise GenerationInvalidError("BadDimension", "TPT items are not MCQs")
    if n_options < 4:
        raise ValueError("n_options must be >= 4")
    record_doc = emit_record(record)
    item_id = f"{dimension.value.lower()}-{record.language.value}-{record.utterance_id}"

    last_reason = "Unknown"
    for attempt in range(max(1, retries)):
        response = call_with_retries(
            client.generate, record_doc, dimension.value, n_options,
            semantic_conflict, retries=retries, backoff_s=backoff_s,
        )
        try:
            options = [
                Option(str(o["text"]), OptionClass(o["klass"]))
                for o in response.get("options", [])
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise UnparseableResponseError(f"malformed MCQ options: {exc}") from exc
        stem = str(response.get("stem", ""))

        rng = random.Random(f"{seed}:shuffle:{item_id}:{attempt}")
        rng.shuffle(options)
        answer_index = next(
            (i for i, o in enumerate(options) if o.klass is OptionClass.GROUND_TRUTH), -1
        )
        item = McqItem(
            item_id=item_id,
            dimension=dimension,
            language=record.language,
            audio=record.audio_path,
            stem=stem,
            options=options,
            answer_index=answer_index,
            source_utterance_id=record.utterance_id,
        )
        try:
            validate_item(item)
            if semantic_conflict and not any(
                o.klass is OptionClass.SEMANTIC_TRAP for o in options
            ):
                raise GenerationInvalidError(
                    "MissingSemanticTrap",
                    "semantic conflict flagged but no SemanticTrap option",
                )
        except GenerationInvalidError as exc:
            last_reason = exc.reason
            logger.debug("generation attempt %d for %s invalid: %s", attempt + 1, item_id, exc)
            continue
        return item
    raise GenerationInvalidError(last_reason, f"{item_id}: invalid after {retries} attempts")


# ── control injection ────────────────────────────────────────────────────────

@dataclass
class TptSet:
    refs: list[ManifestEntry] = field(default_factory=list)
    control_ids: set = field(default_factory=set)   # utterance ids

    def controls(self) -> list[ManifestEntry]:
        return [e for e in self.refs if e.record.utterance_id in self.control_ids]


def inject_controls(
    tpt_entries: list[ManifestEntry],
    fraction: float = DEFAULT_CONTROL_FRACTION,
    seed: int = 0,
) -> TptSet:
    """Flag round(fraction * |tpt set|) records with an empty paralinguistic
    event list as controls (seeded, deterministic).  Short pools flag what
    exists and warn."""
    if not 0 <= fraction <= 1:
        raise ValueError("control fraction must be within [0, 1]")
    eligible = sorted(
        (e for e in tpt_entries if not e.record.paralinguistic_events),
        key=lambda e: e.record.utterance_id,
    )
    wanted = round(fraction * len(tpt_entries))
    rng = random.Random(f"{seed}:controls")
    chosen = rng.sample(eligible, k=min(wanted, len(eligible)))
    if len(chosen) < wanted:
        logger.warning(
            "control shortfall: wanted %d, only %d tag-free records available",
            wanted, len(eligible),
        )
    return TptSet(
        refs=list(tpt_entries),
        control_ids={e.record.utterance_id for e in chosen},
    )


# ── export / import ──────────────────────────────────────────────────────────

@dataclass
class BenchPackage:
    root: Path | None
    items: dict = field(default_factory=dict)       # (Dimension, Language) -> [McqItem]
    tpt_refs: dict = field(default_factory=dict)    # Language -> [ref doc]
    controls: list = field(default_factory=list)    # control registry docs
    provenance: list = field(default_factory=list)  # provenance log lines

    def manifest_count(self) -> int:
        return len(self.items) + len(self.tpt_refs)

    def item_count(self) -> int:
        return sum(len(v) for v in self.items.values())


def _tpt_ref_doc(entry: ManifestEntry, is_control: bool) -> dict:
    record = entry.record
    return {
        "item_id": f"tpt-{record.language.value}-{record.utterance_id}",
        "utterance_id": record.utterance_id,
        "audio": record.audio_path,
        "language": record.language.value,
        "transcript": record.transcript,
        "reference_tagged": record.transcript_tagged,
        "is_control": is_control,
    }


def _write_jsonl(path: Path, docs: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for doc in docs:
            handle.write(json.dumps(doc, ensure_ascii=False, sort_keys=True) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    docs = []
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                docs.append(json.loads(line))
    return docs


def export_package(
    items: dict,
    tpt: TptSet,
    out_dir,
    *,
    provenance_extra: list | None = None,
) -> BenchPackage:
    """Write the package layout; empty strata are omitted (with a warning);
    per-manifest counts land in provenance.jsonl so re-reads can verify."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    package = BenchPackage(root=root)
    package.provenance.extend(provenance_extra or [])

    for (dim, lang), stratum_items in sorted(
        items.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
    ):
        if not stratum_items:
            logger.warning("stratum %s/%s is empty; manifest omitted", dim.value, lang.value)
            package.provenance.append({
                "event": "empty_stratum", "dimension": dim.value, "language": lang.value,
            })
            continue
        for item in stratum_items:
            validate_item(item)
        path = root / dim.value.lower() / lang.value / "items.jsonl"
        _write_jsonl(path, [i.to_dict() for i in stratum_items])
        package.items[(dim, lang)] = list(stratum_items)
        package.provenance.append({
            "event": "manifest",
            "kind": "mcq",
            "dimension": dim.value,
            "language": lang.value,
            "count": len(stratum_items),
        })

    by_language: dict[Language, list[ManifestEntry]] = {}
    for entry in tpt.refs:
        by_language.setdefault(entry.record.language, []).append(entry)
    for lang, entries in sorted(by_language.items(), key=lambda kv: kv[0].value):
        docs = [
            _tpt_ref_doc(e, e.record.utterance_id in tpt.control_ids) for e in entries
        ]
        _write_jsonl(root / "tpt" / lang.value / "refs.jsonl", docs)
        package.tpt_refs[lang] = docs
        package.provenance.append({
            "event": "manifest",
            "kind": "tpt",
            "language": lang.value,
            "count": len(docs),
        })

    package.controls = [
        {
            "item_id": doc["item_id"],
            "utterance_id": doc["utterance_id"],
            "language": doc["language"],
            "audio": doc["audio"],
        }
        for docs in package.tpt_refs.values()
        for doc in docs
        if doc["is_control"]
    ]
    _write_jsonl(root / "controls.jsonl", package.controls)
    _write_jsonl(root / "provenance.jsonl", package.provenance)
    return package


def load_package(root) -> BenchPackage:
    """Re-read an exported package; verifies logged counts against manifest
    lengths and item invariants (round-trip with export_package)."""
    root = Path(root)
    package = BenchPackage(root=root)
    package.provenance = _read_jsonl(root / "provenance.jsonl")

    logged: dict[tuple, int] = {}
    for event in package.provenance:
        if event.get("event") != "manifest":
            continue
        if event["kind"] == "mcq":
            logged[("mcq", event["dimension"], event["language"])] = event["count"]
        else:
            logged[("tpt", event["language"])] = event["count"]

    for items_path in sorted(root.glob("*/*/items.jsonl")):
        docs = _read_jsonl(items_path)
        if not docs:
            continue
        items = [McqItem.from_dict(doc) for doc in docs]
        for item in items:
            validate_item(item)
        dim, lang = items[0].dimension, items[0].language
        package.items[(dim, lang)] = items
        expected = logged.get(("mcq", dim.value, lang.value))
        if expected is not None and expected != len(items):
            raise ValueError(
                f"{items_path}: provenance says {expected} items, found {len(items)}"
            )
    for refs_path in sorted(root.glob("tpt/*/refs.jsonl")):
        docs = _read_jsonl(refs_path)
        lang = Language(refs_path.parent.name)
        package.tpt_refs[lang] = docs
        expected = logged.get(("tpt", lang.value))
        if expected is not None and expected != len(docs):
            raise ValueError(
                f"{refs_path}: provenance says {expected} refs, found {len(docs)}"
            )
    controls_path = root / "controls.jsonl"
    if controls_path.exists():
        package.controls = _read_jsonl(controls_path)
    return package


# ── end-to-end build ─────────────────────────────────────────────────────────

def build_package(
    entries: list[ManifestEntry],
    targets: dict[tuple[Dimension, Language], int],
    mcq_client,
    seed: int,
    out_dir=None,
    *,
    n_options: int = DEFAULT_N_OPTIONS,
    control_fraction: float = DEFAULT_CONTROL_FRACTION,
    err_threshold: float = ERR_THRESHOLD,
    min_duration_s: float = MIN_DURATION_S,
    require_err: bool = False,
    retries: int = DEFAULT_RETRIES,
) -> BenchPackage:
    """Admission -> stratified sampling -> MCQ generation -> control
    injection -> (optional) export.  Invalid generations and backend outages
    drop the affected record with a provenance entry; they never abort the
    build."""
    admitted = admit_candidates(
        entries, err_threshold, min_duration_s, require_err=require_err
    )
    sample = stratified_sample(admitted, targets, seed)

    provenance: list[dict] = [{
        "event": "build",
        "seed": seed,
        "n_options": n_options,
        "control_fraction": control_fraction,
        "err_threshold": err_threshold,
        "min_duration_s": min_duration_s,
        "candidates": len(entries),
        "admitted": len(admitted),
    }]
    provenance.extend({"event": "shortfall", **s} for s in sample.shortfalls)

    items: dict = {}
    tpt_entries: list[ManifestEntry] = []
    for (dim, lang), stratum in sample.by_stratum.items():
        for entry in stratum:
            if not _admissible(entry, err_threshold, min_duration_s):
                raise ValueError(
                    f"{entry.record.utterance_id} violates admission thresholds at export"
                )
        if dim is Dimension.TPT:
            tpt_entries.extend(stratum)
            continue
        generated = []
        for entry in stratum:
            try:
                generated.append(generate_mcq(
                    entry.record, dim, mcq_client, n_options,
                    seed=seed, retries=retries,
                ))
            except (GenerationInvalidError, BackendUnavailableError,
                    UnparseableResponseError) as exc:
                reason = getattr(exc, "reason", exc.__class__.__name__)
                logger.warning("dropping %s/%s %s: %s", dim.value, lang.value,
                               entry.record.utterance_id, exc)
                provenance.append({
                    "event": "generation_dropped",
                    "dimension": dim.value,
                    "language": lang.value,
                    "utterance_id": entry.record.utterance_id,
                    "reason": str(reason),
                })
        items[(dim, lang)] = generated

    tpt = inject_controls(tpt_entries, control_fraction, seed)
    provenance.append({
        "event": "controls",
        "tpt_refs": len(tpt.refs),
        "controls": len(tpt.control_ids),
        "fraction": control_fraction,
    })

    if out_dir is not None:
        return export_package(items, tpt, out_dir, provenance_extra=provenance)
    package = BenchPackage(root=None, items=items, provenance=provenance)
    by_language: dict[Language, list[ManifestEntry]] = {}
    for entry in tpt.refs:
        by_language.setdefault(entry.record.language, []).append(entry)
    package.tpt_refs = {
        lang: [_tpt_ref_doc(e, e.record.utterance_id in tpt.control_ids) for e in refs]
        for lang, refs in by_language.items()
    }
    package.controls = [
        doc_entry
        for docs in package.tpt_refs.values()
        for doc_entry in docs
        if doc_entry["is_control"]
    ]
    return package
