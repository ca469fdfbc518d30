"""The 14-dimension annotation schema, manifest records, and validation.

Single source of truth for the dimension inventory, its tier mapping, the
AnnotationRecord structure every module exchanges, and line-delimited
manifest I/O (one UTF-8 JSON record per line; audio is referenced by path,
never embedded — the pipeline's normalization target is WAV 16 kHz mono
16-bit PCM).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path

from .metrics import MalformedTagError, TokenKind, tokenize
from .vocab import DEFAULT_TAG_VOCABULARY, Tag, TagVocabulary

SCHEMA_VERSION = "1.0"
KNOWN_SCHEMA_VERSIONS = {"1.0"}


class Language(str, Enum):
    ZH = "zh"
    EN = "en"

    @classmethod
    def parse(cls, value) -> "Language":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


class Dimension(str, Enum):
    """The 14 annotated speech attributes (Task abbreviations)."""

    GEN = "GEN"
    AGE = "AGE"
    ACC = "ACC"
    PIT = "PIT"
    SR = "SR"
    RHY = "RHY"
    VT = "VT"
    EMO = "EMO"
    TON = "TON"
    CI = "CI"
    BS = "BS"
    AE = "AE"
    PE = "PE"
    TPT = "TPT"


class Tier(str, Enum):
    SPEAKER_DEMOGRAPHICS = "SpeakerDemographics"
    ACOUSTIC_PROSODIC = "AcousticProsodic"
    AFFECTIVE_SEMANTIC = "AffectiveSemantic"
    ACOUSTIC_SCENE = "AcousticScene"
    LINGUISTIC_PARALINGUISTIC = "LinguisticParalinguistic"


DIMENSION_TIER: dict[Dimension, Tier] = {
    Dimension.GEN: Tier.SPEAKER_DEMOGRAPHICS,
    Dimension.AGE: Tier.SPEAKER_DEMOGRAPHICS,
    Dimension.ACC: Tier.SPEAKER_DEMOGRAPHICS,
    Dimension.PIT: Tier.ACOUSTIC_PROSODIC,
    Dimension.SR: Tier.ACOUSTIC_PROSODIC,
    Dimension.RHY: Tier.ACOUSTIC_PROSODIC,
    Dimension.VT: Tier.ACOUSTIC_PROSODIC,
    Dimension.EMO: Tier.AFFECTIVE_SEMANTIC,
    Dimension.TON: Tier.AFFECTIVE_SEMANTIC,
    Dimension.CI: Tier.AFFECTIVE_SEMANTIC,
    Dimension.BS: Tier.ACOUSTIC_SCENE,
    Dimension.AE: Tier.ACOUSTIC_SCENE,
    Dimension.PE: Tier.LINGUISTIC_PARALINGUISTIC,
    Dimension.TPT: Tier.LINGUISTIC_PARALINGUISTIC,
}

# record attribute backing each dimension
DIMENSION_FIELDS: dict[Dimension, str] = {
    Dimension.GEN: "gender",
    Dimension.AGE: "age",
    Dimension.ACC: "accent",
    Dimension.PIT: "pitch",
    Dimension.SR: "speaking_rate",
    Dimension.RHY: "rhythm",
    Dimension.VT: "voice_texture",
    Dimension.EMO: "emotion",
    Dimension.TON: "tone",
    Dimension.CI: "contextual_inference",
    Dimension.BS: "background_sound",
    Dimension.AE: "acoustic_environment",
    Dimension.PE: "paralinguistic_events",
    Dimension.TPT: "transcript_tagged",
}

DESCRIPTION_DIMENSIONS = tuple(
    d for d in Dimension if d not in (Dimension.PE, Dimension.TPT)
)


class Provenance(str, Enum):
    PIPELINE_STAGE1 = "pipeline_stage1"
    PIPELINE_STAGE2 = "pipeline_stage2"
    EXTERNAL_INGEST = "external_ingest"


@dataclass
class AnnotationRecord:
    """One utterance's full structured annotation — the pipeline's central
    artifact."""

    utterance_id: str
    audio_path: str
    language: Language
    duration_s: float
    transcript: str
    transcript_tagged: str
    gender: str
    age: str
    accent: str
    pitch: str
    speaking_rate: str
    rhythm: str
    voice_texture: str
    emotion: str
    tone: str
    contextual_inference: str
    background_sound: str
    acoustic_environment: str
    paralinguistic_events: list[Tag] = field(default_factory=list)
    schema_version: str = SCHEMA_VERSION
    provenance: Provenance = Provenance.PIPELINE_STAGE2

    def dimension_value(self, dim: Dimension):
        return getattr(self, DIMENSION_FIELDS[dim])


def emit_record(record: AnnotationRecord) -> dict:
    """Serialize to a plain JSON-able dict; validate_record(emit_record(r))
    reproduces r exactly (round-trip invariant)."""
    doc = {}
    for f in fields(AnnotationRecord):
        value = getattr(record, f.name)
        if isinstance(value, Enum):
            value = value.value
        doc[f.name] = value
    doc["paralinguistic_events"] = [
        {"category": t.category, "anchor_index": t.anchor_index}
        for t in record.paralinguistic_events
    ]
    return doc


# ── validation ───────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ValidationIssue:
    code: str       # MissingDimension | UnknownTag | TagTranscriptMismatch |
                    # BadSchemaVersion | MalformedTag | InvalidValue
    field: str
    message: str


class ValidationErrorList(ValueError):
    """Validation failed; .issues names each offending field and rule."""

    def __init__(self, issues: list[ValidationIssue]):
        super().__init__("; ".join(f"{i.code}({i.field}): {i.message}" for i in issues))
        self.issues = issues

    def codes(self) -> set[str]:
        return {i.code for i in self.issues}


def validate_record(
    raw, vocabulary: TagVocabulary = DEFAULT_TAG_VOCABULARY
) -> AnnotationRecord:
    """Parse and validate one structured annotation document.

    Accepts a JSON string or an already-parsed mapping.  Returns the
    fully-populated record or raises ValidationErrorList carrying every
    violation found (missing dimensions, unknown tags, tagged/plain
    transcript mismatch, bad schema version).
    """
    if isinstance(raw, (str, bytes)):
        doc = json.loads(raw)
    else:
        doc = raw
    if not isinstance(doc, dict):
        raise ValueError("record document must be a JSON object")

    issues: list[ValidationIssue] = []

    version = doc.get("schema_version")
    if version not in KNOWN_SCHEMA_VERSIONS:
        issues.append(ValidationIssue(
            "BadSchemaVersion", "schema_version",
            f"unknown schema version {version!r} (known: {sorted(KNOWN_SCHEMA_VERSIONS)})",
        ))

    for key in ("utterance_id", "audio_path", "transcript"):
        value = doc.get(key)
        if not isinstance(value, str):
            issues.append(ValidationIssue("InvalidValue", key, "required string field"))

    language = None
    try:
        language = Language.parse(doc.get("language"))
    except (ValueError, AttributeError):
        issues.append(ValidationIssue(
            "InvalidValue", "language", f"language must be one of zh/en, got {doc.get('language')!r}"
        ))

    duration = doc.get("duration_s")
    if not isinstance(duration, (int, float)) or isinstance(duration, bool) or duration < 0:
        issues.append(ValidationIssue("InvalidValue", "duration_s", "must be a non-negative number"))

    provenance = Provenance.PIPELINE_STAGE2
    if "provenance" in doc:
        try:
            provenance = Provenance(doc["provenance"])
        except ValueError:
            issues.append(ValidationIssue(
                "InvalidValue", "provenance", f"unknown provenance {doc['provenance']!r}"
            ))

    # every dimension populated, no empty descriptions
    for dim in DESCRIPTION_DIMENSIONS:
        key = DIMENSION_FIELDS[dim]
        value = doc.get(key)
        if not isinstance(value, str) or not value.strip():
            issues.append(ValidationIssue(
                "MissingDimension", key, f"dimension {dim.value} missing or empty"
            ))

    if not isinstance(doc.get("transcript_tagged"), str):
        issues.append(ValidationIssue(
            "MissingDimension", "transcript_tagged", "dimension TPT missing"
        ))

    events_raw = doc.get("paralinguistic_events")
    events: list[Tag] = []
    if not isinstance(events_raw, list):
        issues.append(ValidationIssue(
            "MissingDimension", "paralinguistic_events",
            "dimension PE missing (list required; empty list is valid)",
        ))
    else:
        for i, entry in enumerate(events_raw):
            try:
                category = entry["category"] if isinstance(entry, dict) else str(entry)
                anchor = int(entry.get("anchor_index", 0)) if isinstance(entry, dict) else 0
            except (KeyError, TypeError, ValueError):
                issues.append(ValidationIssue(
                    "InvalidValue", f"paralinguistic_events[{i}]", "malformed tag entry"
                ))
                continue
            if category not in vocabulary:
                issues.append(ValidationIssue(
                    "UnknownTag", f"paralinguistic_events[{i}]",
                    f"tag {category!r} not in vocabulary",
                ))
                continue
            try:
                events.append(Tag(vocabulary.canonicalize(category), anchor))
            except ValueError as exc:
                issues.append(ValidationIssue(
                    "InvalidValue", f"paralinguistic_events[{i}]", str(exc)
                ))

    # tagged transcript: vocabulary membership + strip-tags consistency
    if language is not None and isinstance(doc.get("transcript_tagged"), str) \
            and isinstance(doc.get("transcript"), str):
        try:
            tagged_tokens = tokenize(doc["transcript_tagged"], language, vocabulary)
        except MalformedTagError as exc:
            issues.append(ValidationIssue("MalformedTag", "transcript_tagged", str(exc)))
        else:
            for token in tagged_tokens:
                if token.kind is TokenKind.TAG and token.value not in vocabulary:
                    issues.append(ValidationIssue(
                        "UnknownTag", "transcript_tagged",
                        f"tag {token.value!r} not in vocabulary",
                    ))
            stripped = [t for t in tagged_tokens if t.kind is TokenKind.TEXT]
            plain = tokenize(doc["transcript"], language, vocabulary)
            if stripped != plain:
                issues.append(ValidationIssue(
                    "TagTranscriptMismatch", "transcript_tagged",
                    "stripping tags from transcript_tagged does not reproduce transcript tokens",
                ))

    if issues:
        raise ValidationErrorList(issues)

    return AnnotationRecord(
        utterance_id=doc["utterance_id"],
        audio_path=doc["audio_path"],
        language=language,
        duration_s=float(duration),
        transcript=doc["transcript"],
        transcript_tagged=doc["transcript_tagged"],
        gender=doc["gender"],
        age=doc["age"],
        accent=doc["accent"],
        pitch=doc["pitch"],
        speaking_rate=doc["speaking_rate"],
        rhythm=doc["rhythm"],
        voice_texture=doc["voice_texture"],
        emotion=doc["emotion"],
        tone=doc["tone"],
        contextual_inference=doc["contextual_inference"],
        background_sound=doc["background_sound"],
        acoustic_environment=doc["acoustic_environment"],
        paralinguistic_events=events,
        schema_version=doc["schema_version"],
        provenance=provenance,
    )


# ── manifests ────────────────────────────────────────────────────────────────

@dataclass
class ManifestEntry:
    record: AnnotationRecord
    quality: dict | None = None  # filter-name -> {"pass": bool, "score": ..., "detail": ...}


def write_manifest(entries: list, path) -> None:
    """One UTF-8 JSON object per line; ManifestEntry quality rides along
    under the reserved top-level key "quality"."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for entry in entries:
            if isinstance(entry, AnnotationRecord):
                entry = ManifestEntry(entry)
            doc = emit_record(entry.record)
            if entry.quality is not None:
                doc["quality"] = entry.quality
            handle.write(json.dumps(doc, ensure_ascii=False, sort_keys=True) + "\n")


def read_manifest(
    path, vocabulary: TagVocabulary = DEFAULT_TAG_VOCABULARY
) -> list[ManifestEntry]:
    entries = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path} line {line_no}: not valid JSON") from exc
            quality = doc.pop("quality", None)
            entries.append(ManifestEntry(validate_record(doc, vocabulary), quality))
    return entries
