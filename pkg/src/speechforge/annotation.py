"""Two-stage annotation orchestration.

Stage 1 (macro) sends one chunk plus detector priors — utterance timestamps,
transcriptions, speaker ids — to the annotator backend and gets back
calibrated timestamps, rectified transcriptions, and the context-dependent
macro attributes.  Stage 2 (micro) annotates each utterance individually,
inheriting the macro context, and must return a document that passes full
schema validation.  A pre-segmented ingest path reuses the micro exchange
with external metadata as priors.

All backend exchanges are retried with exponential backoff and are
content-addressed, so re-running a partially completed batch only sends the
missing items (verifiable against a mock's call counter).  Macro attributes
refined at stage 2 are never silently overwritten: every divergence from the
inherited prior is logged as a diff.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from importlib import resources

from .backends import (
    DEFAULT_RETRIES,
    BackendUnavailableError,
    UnparseableResponseError,
    call_with_retries,
    content_hash,
)
from .schema import (
    AnnotationRecord,
    Provenance,
    ValidationErrorList,
    emit_record,
    validate_record,
)
from .vocab import DEFAULT_TAG_VOCABULARY, TagVocabulary

logger = logging.getLogger(__name__)

_BOUNDS_EPS = 1e-6

# macro attributes inherited by stage 2 (refinement permitted, diff-logged)
MACRO_FIELDS = (
    "contextual_inference",
    "background_sound",
    "acoustic_environment",
    "transcript_tagged",
)


class TimestampOutOfBoundsError(ValueError):
    """A calibrated timestamp escapes its chunk bounds (or is disordered)."""


class AnnotationStage(str, Enum):
    MACRO = "macro"
    MICRO = "micro"
    INGEST = "ingest"


# ── prompt templates ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PromptTemplate:
    """Versioned text asset with named placeholders ({priors},
    {macro_context}); backends render these server-side, the orchestrator
    only selects the template id."""

    template_id: str
    stage: AnnotationStage
    text: str

    def render(self, **context) -> str:
        rendered = self.text
        for key, value in context.items():
            if not isinstance(value, str):
                value = json.dumps(value, ensure_ascii=False, sort_keys=True)
            rendered = rendered.replace("{" + key + "}", value)
        return rendered


class PromptLibrary:
    def __init__(self, templates: dict[str, PromptTemplate], version: str):
        self.templates = dict(templates)
        self.version = version

    def get(self, template_id: str) -> PromptTemplate:
        return self.templates[template_id]

    def default_for(self, stage: AnnotationStage) -> PromptTemplate:
        stage = AnnotationStage(stage)
        for template in self.templates.values():
            if template.stage is stage:
                return template
        raise KeyError(f"no template for stage {stage.value!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "PromptLibrary":
        templates = {
            tid: PromptTemplate(tid, AnnotationStage(t["stage"]), t["text"])
            for tid, t in doc["templates"].items()
        }
        return cls(templates, doc.get("version", "1.0"))


def _load_asset(name: str) -> dict:
    with resources.files("speechforge.data").joinpath(name).open("r", encoding="utf-8") as fh:
        return json.load(fh)


DEFAULT_PROMPTS = PromptLibrary.from_dict(_load_asset("prompts.json"))


# ── work units and results ───────────────────────────────────────────────────

@dataclass
class ChunkWork:
    """One chunk of audio plus its detector priors, ready for stage 1."""

    chunk_id: str
    audio: str
    start_s: float
    end_s: float
    utterances: list[dict]          # start_s, end_s, transcript, speaker_id
    language: str = "en"
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_chunk(cls, chunk, audio: str, chunk_id: str, language: str = "en") -> "ChunkWork":
        priors = [
            {
                "start_s": u.start_s,
                "end_s": u.end_s,
                "transcript": u.text or "",
                "speaker_id": u.speaker_id,
            }
            for u in chunk.utterances
        ]
        return cls(chunk_id, audio, chunk.start_s, chunk.end_s, priors, language)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ChunkWork":
        return cls(
            chunk_id=doc["chunk_id"],
            audio=doc["audio"],
            start_s=float(doc["start_s"]),
            end_s=float(doc["end_s"]),
            utterances=list(doc["utterances"]),
            language=doc.get("language", "en"),
            metadata=doc.get("metadata", {}),
        )


@dataclass
class Stage1Result:
    """Calibrated, macro-annotated chunk: every prior utterance is either in
    `utterances` or in `dropped` with an explicit reason."""

    chunk_id: str
    audio: str
    start_s: float
    end_s: float
    utterances: list[dict]
    dropped: list[dict]
    language: str = "en"
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "Stage1Result":
        return cls(
            chunk_id=doc["chunk_id"],
            audio=doc["audio"],
            start_s=float(doc["start_s"]),
            end_s=float(doc["end_s"]),
            utterances=list(doc["utterances"]),
            dropped=list(doc.get("dropped", [])),
            language=doc.get("language", "en"),
            metadata=doc.get("metadata", {}),
        )


@dataclass(frozen=True)
class FailureEntry:
    item_id: str
    stage: str
    error: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PipelineResult:
    records: list[AnnotationRecord] = field(default_factory=list)
    failures: list[FailureEntry] = field(default_factory=list)
    skipped: int = 0    # served from the store, no backend call

    def to_dict(self) -> dict:
        return {
            "records": len(self.records),
            "failures": [f.to_dict() for f in self.failures],
            "skipped": self.skipped,
        }


# ── stage operations ─────────────────────────────────────────────────────────

def _chunk_bounds(chunk) -> tuple[float, float]:
    start = getattr(chunk, "start_s", None)
    end = getattr(chunk, "end_s", None)
    if start is None and isinstance(chunk, dict):
        start, end = chunk["start_s"], chunk["end_s"]
    return float(start), float(end)


def _check_bounds(utterances: list[dict], start: float, end: float, origin: str) -> None:
    previous_start = None
    for i, utt in enumerate(utterances):
        try:
            u_start, u_end = float(utt["start_s"]), float(utt["end_s"])
        except (KeyError, TypeError, ValueError) as exc:
            raise UnparseableResponseError(
                f"{origin} utterance {i}: missing or non-numeric timestamps"
            ) from exc
        if u_start >= u_end:
            raise TimestampOutOfBoundsError(
                f"{origin} utterance {i}: inverted timestamps {u_start} >= {u_end}"
            )
        if u_start < start - _BOUNDS_EPS or u_end > end + _BOUNDS_EPS:
            raise TimestampOutOfBoundsError(
                f"{origin} utterance {i}: [{u_start}, {u_end}] escapes chunk "
                f"bounds [{start}, {end}]"
            )
        if previous_start is not None and u_start < previous_start:
            raise TimestampOutOfBoundsError(
                f"{origin} utterance {i}: starts at {u_start}, before its "
                f"predecessor at {previous_start}"
            )
        previous_start = u_start


def annotate_stage1(
    chunk,
    priors: ChunkWork,
    client,
    *,
    library: PromptLibrary = DEFAULT_PROMPTS,
    retries: int = DEFAULT_RETRIES,
    backoff_s: float = 0.05,
) -> Stage1Result:
    """Macro-annotate one chunk.  Raises BackendUnavailableError,
    UnparseableResponseError, or TimestampOutOfBoundsError."""
    if not priors.utterances:
        raise ValueError(f"chunk {priors.chunk_id}: stage-1 priors are empty")
    start, end = _chunk_bounds(chunk)
    _check_bounds(priors.utterances, start, end, f"chunk {priors.chunk_id} prior")

    template_id = library.default_for(AnnotationStage.MACRO).template_id
    payload = {
        "chunk": {"chunk_id": priors.chunk_id, "start_s": start, "end_s": end},
        "utterances": priors.utterances,
    }
    response = call_with_retries(
        client.annotate, AnnotationStage.MACRO.value, template_id, payload,
        priors.audio, retries=retries, backoff_s=backoff_s,
    )

    utterances = response.get("utterances")
    if not isinstance(utterances, list):
        raise UnparseableResponseError(
            f"chunk {priors.chunk_id}: stage-1 response has no utterance list"
        )
    dropped = response.get("dropped", [])
    if not isinstance(dropped, list):
        raise UnparseableResponseError(f"chunk {priors.chunk_id}: malformed drop list")
    for entry in dropped:
        if not isinstance(entry, dict) or not str(entry.get("reason", "")).strip():
            raise UnparseableResponseError(
                f"chunk {priors.chunk_id}: dropped utterance without a reason"
            )
    if len(utterances) + len(dropped) != len(priors.utterances):
        raise UnparseableResponseError(
            f"chunk {priors.chunk_id}: {len(priors.utterances)} priors but "
            f"{len(utterances)} calibrated + {len(dropped)} dropped"
        )
    _check_bounds(utterances, start, end, f"chunk {priors.chunk_id} calibrated")
    for field_name in MACRO_FIELDS:
        for i, utt in enumerate(utterances):
            if not isinstance(utt.get(field_name), str):
                raise UnparseableResponseError(
                    f"chunk {priors.chunk_id} utterance {i}: missing macro "
                    f"attribute {field_name!r}"
                )

    # log the calibration diff (timestamps moved / transcripts rectified)
    if not dropped:
        for i, (prior, calibrated) in enumerate(zip(priors.utterances, utterances)):
            if (prior["start_s"], prior["end_s"]) != (calibrated["start_s"], calibrated["end_s"]):
                logger.info(
                    "chunk %s utterance %d: timestamps calibrated [%s, %s] -> [%s, %s]",
                    priors.chunk_id, i, prior["start_s"], prior["end_s"],
                    calibrated["start_s"], calibrated["end_s"],
                )
            if prior.get("transcript") and prior["transcript"] != calibrated.get("transcript"):
                logger.info(
                    "chunk %s utterance %d: transcription rectified %r -> %r",
                    priors.chunk_id, i, prior["transcript"], calibrated["transcript"],
                )
    for entry in dropped:
        logger.info("chunk %s: utterance dropped by annotator: %s", priors.chunk_id, entry)

    return Stage1Result(
        chunk_id=priors.chunk_id,
        audio=priors.audio,
        start_s=start,
        end_s=end,
        utterances=utterances,
        dropped=dropped,
        language=priors.language,
        metadata=dict(priors.metadata),
    )


def annotate_stage2(
    audio: str,
    macro_priors: dict,
    client,
    *,
    language: str = "en",
    metadata: dict | None = None,
    library: PromptLibrary = DEFAULT_PROMPTS,
    vocabulary: TagVocabulary = DEFAULT_TAG_VOCABULARY,
    retries: int = DEFAULT_RETRIES,
    backoff_s: float = 0.05,
) -> AnnotationRecord:
    """Micro-annotate one utterance, inheriting `macro_priors` (a calibrated
    utterance from a Stage1Result).  ValidationErrorList passes through when
    the backend's document is incomplete."""
    utterance = {
        k: macro_priors[k]
        for k in ("utterance_id", "start_s", "end_s", "transcript", "speaker_id")
        if k in macro_priors
    }
    macro = {k: macro_priors[k] for k in MACRO_FIELDS if k in macro_priors}
    template_id = library.default_for(AnnotationStage.MICRO).template_id
    payload = {
        "utterance": utterance,
        "macro": macro,
        "metadata": metadata or {},
        "language": language,
    }
    doc = call_with_retries(
        client.annotate, AnnotationStage.MICRO.value, template_id, payload,
        audio, retries=retries, backoff_s=backoff_s,
    )
    doc.setdefault("provenance", Provenance.PIPELINE_STAGE2.value)
    record = validate_record(doc, vocabulary)
    for field_name in MACRO_FIELDS:
        prior_value = macro.get(field_name)
        refined = getattr(record, field_name)
        if prior_value is not None and prior_value != refined:
            logger.info(
                "utterance %s: macro attribute %s refined: %r -> %r",
                record.utterance_id, field_name, prior_value, refined,
            )
    return record


def ingest_presegmented(
    audio: str,
    metadata: dict,
    client,
    *,
    language: str | None = None,
    library: PromptLibrary = DEFAULT_PROMPTS,
    vocabulary: TagVocabulary = DEFAULT_TAG_VOCABULARY,
    retries: int = DEFAULT_RETRIES,
    backoff_s: float = 0.05,
) -> AnnotationRecord:
    """Annotate one pre-segmented external utterance, using its original
    metadata (at minimum a transcript) as priors."""
    if not str(metadata.get("transcript", "")).strip():
        raise ValueError("ingest metadata must include a transcript")
    language = language or metadata.get("language", "en")
    template_id = library.default_for(AnnotationStage.INGEST).template_id
    payload = {
        "utterance": {},
        "macro": {},
        "metadata": metadata,
        "language": language,
    }
    doc = call_with_retries(
        client.annotate, AnnotationStage.INGEST.value, template_id, payload,
        audio, retries=retries, backoff_s=backoff_s,
    )
    doc.setdefault("provenance", Provenance.EXTERNAL_INGEST.value)
    return validate_record(doc, vocabulary)


# ── batch pipeline ───────────────────────────────────────────────────────────

_STAGE_ERRORS = (
    BackendUnavailableError,
    UnparseableResponseError,
    TimestampOutOfBoundsError,
    ValidationErrorList,
    ValueError,
    KeyError,
)


def _utterance_audio(audio: str, utt: dict) -> str:
    return f"{audio}#t={float(utt['start_s']):.3f},{float(utt['end_s']):.3f}"


def _stored_record(store, key: str, vocabulary) -> AnnotationRecord | None:
    doc = store.get(key) if store is not None else None
    if doc is None:
        return None
    try:
        return validate_record(doc, vocabulary)
    except (ValidationErrorList, ValueError):
        return None   # stale or invalid — re-annotate


def run_stage1(
    chunks: list[ChunkWork],
    client,
    *,
    store: dict | None = None,
    library: PromptLibrary = DEFAULT_PROMPTS,
    retries: int = DEFAULT_RETRIES,
    backoff_s: float = 0.05,
) -> tuple[list[Stage1Result], list[FailureEntry], int]:
    """Macro-annotate a batch of chunks, isolating failures per chunk.
    Returns (results, failures, skipped-from-store)."""
    results: list[Stage1Result] = []
    failures: list[FailureEntry] = []
    skipped = 0
    for work in chunks:
        key = "stage1:" + content_hash(work.to_dict())
        if store is not None and key in store:
            results.append(Stage1Result.from_dict(store[key]))
            skipped += 1
            continue
        try:
            stage1 = annotate_stage1(
                work, work, client,
                library=library, retries=retries, backoff_s=backoff_s,
            )
        except _STAGE_ERRORS as exc:
            failures.append(FailureEntry(work.chunk_id, "macro", str(exc)))
            continue
        if store is not None:
            store[key] = stage1.to_dict()
        results.append(stage1)
    return results, failures, skipped


def run_stage2(
    results: list[Stage1Result],
    client,
    concurrency_limit: int = 4,
    *,
    store: dict | None = None,
    library: PromptLibrary = DEFAULT_PROMPTS,
    vocabulary: TagVocabulary = DEFAULT_TAG_VOCABULARY,
    retries: int = DEFAULT_RETRIES,
    backoff_s: float = 0.05,
) -> PipelineResult:
    """Micro-annotate every calibrated utterance of the given Stage1Results.
    Failures are isolated per utterance; stored records are reused."""
    if concurrency_limit < 1:
        raise ValueError("concurrency_limit must be >= 1")
    result = PipelineResult()

    jobs = []
    for stage1 in results:
        for index, utt in enumerate(stage1.utterances):
            utt = dict(utt)
            utt.setdefault("utterance_id", f"{stage1.chunk_id}-u{index:03d}")
            jobs.append((stage1, utt["utterance_id"], _utterance_audio(stage1.audio, utt), utt))

    def annotate_one(job):
        stage1, utterance_id, utt_audio, utt = job
        key = "record:" + content_hash(
            {"audio": utt_audio, "utterance": utt, "language": stage1.language}
        )
        record = _stored_record(store, key, vocabulary)
        if record is not None:
            return utterance_id, key, record, None, True
        try:
            record = annotate_stage2(
                utt_audio, utt, client,
                language=stage1.language, metadata=stage1.metadata,
                library=library, vocabulary=vocabulary,
                retries=retries, backoff_s=backoff_s,
            )
        except _STAGE_ERRORS as exc:
            return utterance_id, key, None, str(exc), False
        return utterance_id, key, record, None, False

    if concurrency_limit == 1 or len(jobs) <= 1:
        outcomes = [annotate_one(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=concurrency_limit) as pool:
            outcomes = list(pool.map(annotate_one, jobs))

    for utterance_id, key, record, error, from_store in outcomes:
        if record is None:
            result.failures.append(FailureEntry(utterance_id, "micro", error))
            continue
        if from_store:
            result.skipped += 1
        elif store is not None:
            store[key] = emit_record(record)
        result.records.append(record)
    return result


def run_pipeline(
    chunks: list[ChunkWork],
    client,
    concurrency_limit: int = 4,
    *,
    store: dict | None = None,
    library: PromptLibrary = DEFAULT_PROMPTS,
    vocabulary: TagVocabulary = DEFAULT_TAG_VOCABULARY,
    retries: int = DEFAULT_RETRIES,
    backoff_s: float = 0.05,
) -> PipelineResult:
    """Drive chunks through stage 1 then their utterances through stage 2.

    Failures are isolated: a stage-1 failure consumes its chunk (one failure
    entry), a stage-2 failure consumes only its utterance.  With a `store`
    (any mutable mapping), completed work is content-addressed and skipped on
    re-runs.  No stage-2 request is ever issued for a chunk without a
    validated Stage1Result.
    """
    if concurrency_limit < 1:
        raise ValueError("concurrency_limit must be >= 1")
    stage1_results, failures, skipped = run_stage1(
        chunks, client, store=store, library=library,
        retries=retries, backoff_s=backoff_s,
    )
    result = run_stage2(
        stage1_results, client, concurrency_limit,
        store=store, library=library, vocabulary=vocabulary,
        retries=retries, backoff_s=backoff_s,
    )
    result.failures = failures + result.failures
    result.skipped += skipped
    return result


def run_ingest(
    items: list[dict],
    client,
    concurrency_limit: int = 4,
    *,
    store: dict | None = None,
    library: PromptLibrary = DEFAULT_PROMPTS,
    vocabulary: TagVocabulary = DEFAULT_TAG_VOCABULARY,
    retries: int = DEFAULT_RETRIES,
    backoff_s: float = 0.05,
) -> PipelineResult:
    """Annotate pre-segmented external items; each needs `audio` plus
    metadata including a transcript.  Same isolation/idempotency contract as
    run_pipeline."""
    if concurrency_limit < 1:
        raise ValueError("concurrency_limit must be >= 1")
    result = PipelineResult()

    def ingest_one(item):
        audio = item.get("audio") or item.get("audio_path", "")
        item_id = item.get("utterance_id") or audio
        metadata = {k: v for k, v in item.items() if k != "audio"}
        key = "record:" + content_hash({"ingest": metadata, "audio": audio})
        record = _stored_record(store, key, vocabulary)
        if record is not None:
            return item_id, key, record, None, True
        try:
            record = ingest_presegmented(
                audio, metadata, client,
                library=library, vocabulary=vocabulary,
                retries=retries, backoff_s=backoff_s,
            )
        except _STAGE_ERRORS as exc:
            return item_id, key, None, str(exc), False
        return item_id, key, record, None, False

    if concurrency_limit == 1 or len(items) <= 1:
        outcomes = [ingest_one(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=concurrency_limit) as pool:
            outcomes = list(pool.map(ingest_one, items))

    for item_id, key, record, error, from_store in outcomes:
        if record is None:
            result.failures.append(FailureEntry(item_id, "ingest", error))
            continue
        if from_store:
            result.skipped += 1
        elif store is not None:
            store[key] = emit_record(record)
        result.records.append(record)
    return result
