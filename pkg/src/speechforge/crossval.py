"""Multi-expert cross-validation cascade.

Five filters, each judging one annotated record against one expert backend:
transcription error rate (pass iff err <= 0.30, inclusive — exactly 30 % is
retained), emotion polarity agreement, pitch/rate intensity-level agreement,
demographics intersection (age at bucket granularity), and paralinguistic
presence.  A record survives iff every enabled filter passes; all filters
are evaluated for every record, so the survivor set is independent of
filter order and rejection statistics attribute every failure.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

from .backends import BackendUnavailableError, UnparseableResponseError, call_with_retries
from .metrics import compute_err
from .schema import AnnotationRecord, ManifestEntry


class EmptyReferenceError(ValueError):
    """The record under filtering has an empty transcript."""


class Polarity(str, Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    NEUTRAL = "Neutral"


class IntensityLevel(str, Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class FilterVerdict:
    filter_name: str
    passed: bool
    score: float | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "score": self.score,
            "detail": self.detail,
        }


# ── lexicons (editable data assets, loaded as defaults) ──────────────────────

class PolarityMap:
    """Ordered keyword rules, first match wins; no match -> Neutral."""

    def __init__(self, rules: list[tuple[Polarity, tuple[str, ...]]]):
        for _, keywords in rules:
            if not keywords:
                raise ValueError("every polarity rule needs at least one keyword")
        self.rules = [(Polarity(p), tuple(k.lower() for k in kws)) for p, kws in rules]

    def classify(self, description: str) -> Polarity:
        text = description.casefold()
        for polarity, keywords in self.rules:
            if any(k in text for k in keywords):
                return polarity
        return Polarity.NEUTRAL

    @classmethod
    def from_dict(cls, doc: dict) -> "PolarityMap":
        return cls([(r["polarity"], tuple(r["keywords"])) for r in doc["rules"]])


class IntensityScale:
    """Keyword quantization of pitch / speaking-rate descriptions into
    {Low, Medium, High}; unmatched descriptions map to Unknown."""

    def __init__(self, pitch_rules, rate_rules):
        self.pitch_rules = [(IntensityLevel(l), tuple(k.lower() for k in kws))
                            for l, kws in pitch_rules]
        self.rate_rules = [(IntensityLevel(l), tuple(k.lower() for k in kws))
                           for l, kws in rate_rules]

    @staticmethod
    def _quantize(text: str, rules) -> IntensityLevel:
        lowered = text.casefold()
        for level, keywords in rules:
            if any(k in lowered for k in keywords):
                return level
        return IntensityLevel.UNKNOWN

    def quantize_pitch(self, description: str) -> IntensityLevel:
        return self._quantize(description, self.pitch_rules)

    def quantize_rate(self, description: str) -> IntensityLevel:
        return self._quantize(description, self.rate_rules)

    @classmethod
    def from_dict(cls, doc: dict) -> "IntensityScale":
        return cls(
            [(r["level"], tuple(r["keywords"])) for r in doc["pitch"]],
            [(r["level"], tuple(r["keywords"])) for r in doc["rate"]],
        )


def _load_asset(name: str) -> dict:
    with resources.files("speechforge.data").joinpath(name).open("r", encoding="utf-8") as fh:
        return json.load(fh)


DEFAULT_POLARITY_MAP = PolarityMap.from_dict(_load_asset("polarity.json"))
DEFAULT_INTENSITY_SCALE = IntensityScale.from_dict(_load_asset("intensity.json"))


def parse_level(value: str) -> IntensityLevel:
    try:
        return IntensityLevel(str(value).strip().title())
    except ValueError:
        return IntensityLevel.UNKNOWN


@dataclass(frozen=True)
class AgeBucket:
    name: str
    lo: int
    hi: int | None           # None: open-ended upper bound
    keywords: tuple[str, ...]

    @property
    def label(self) -> str:
        if self.hi is None:
            return f"{self.name} ({self.lo}+)"
        return f"{self.name} ({self.lo}-{self.hi})"

    def contains(self, age: int) -> bool:
        return age >= self.lo and (self.hi is None or age <= self.hi)


DEFAULT_AGE_BUCKETS = (
    AgeBucket("Child", 0, 12, ("child", "kid")),
    AgeBucket("Teenager", 13, 18, ("teen",)),
    AgeBucket("Young Adult", 19, 35, ("young adult",)),
    AgeBucket("Middle-Aged", 36, 55, ("middle-aged", "middle aged")),
    AgeBucket("Senior", 56, None, ("senior", "elder")),
)


def bucket_of(text: str, buckets=DEFAULT_AGE_BUCKETS) -> str | None:
    """Resolve an age description (a number or a bucket-ish phrase) to a
    bucket name; None when nothing matches (fails closed downstream)."""
    match = re.search(r"\d+", text)
    if match:
        age = int(match.group())
        for bucket in buckets:
            if bucket.contains(age):
                return bucket.name
        return None
    lowered = text.casefold()
    for bucket in buckets:
        if any(k in lowered for k in bucket.keywords):
            return bucket.name
    return None


# ── the five filters ─────────────────────────────────────────────────────────

def filter_transcription_error(record: AnnotationRecord, expert_transcript: str,
                               threshold: float = 0.30) -> FilterVerdict:
    if not record.transcript.strip():
        raise EmptyReferenceError(f"record {record.utterance_id} has an empty transcript")
    err = compute_err(record.transcript, expert_transcript, record.language)
    return FilterVerdict(
        "transcription_error", err <= threshold, err,
        f"err={err:.4f}, threshold={threshold} (inclusive)",
    )


def filter_emotion_polarity(record: AnnotationRecord, expert_label: str,
                            polarity_map: PolarityMap = DEFAULT_POLARITY_MAP) -> FilterVerdict:
    ours = polarity_map.classify(record.emotion)
    theirs = polarity_map.classify(expert_label)
    return FilterVerdict(
        "emotion_polarity", ours == theirs, None,
        f"record={ours.value}, expert={theirs.value}",
    )


def filter_intensity(record: AnnotationRecord, expert_pitch: str, expert_rate: str,
                     scale: IntensityScale = DEFAULT_INTENSITY_SCALE,
                     fail_open: bool = False) -> FilterVerdict:
    ours_pitch = scale.quantize_pitch(record.pitch)
    ours_rate = scale.quantize_rate(record.speaking_rate)
    theirs_pitch = parse_level(expert_pitch)
    theirs_rate = parse_level(expert_rate)
    levels = (ours_pitch, ours_rate, theirs_pitch, theirs_rate)
    detail = (f"pitch {ours_pitch.value} vs {theirs_pitch.value}; "
              f"rate {ours_rate.value} vs {theirs_rate.value}")
    if IntensityLevel.UNKNOWN in levels:
        return FilterVerdict("intensity", fail_open, None, detail + " (Unknown present)")
    passed = ours_pitch == theirs_pitch and ours_rate == theirs_rate
    return FilterVerdict("intensity", passed, None, detail)


def _norm(text: str) -> str:
    return " ".join(str(text).strip().casefold().split())


def _word_containment(ours: str, theirs: str) -> bool:
    """Whole-word subset in either direction: 'female' agrees with 'female
    voice', but 'male' never agrees with 'female' (substring matching
    would get that wrong)."""
    a, b = set(_norm(ours).split()), set(_norm(theirs).split())
    return bool(a) and bool(b) and (a <= b or b <= a)


def filter_demographics(record: AnnotationRecord, expert: dict,
                        buckets=DEFAULT_AGE_BUCKETS) -> FilterVerdict:
    ours_bucket = bucket_of(record.age, buckets)
    theirs_bucket = bucket_of(str(expert.get("age", "")), buckets)
    age_ok = ours_bucket is not None and ours_bucket == theirs_bucket

    ours_gender, theirs_gender = _norm(record.gender), _norm(expert.get("gender", ""))
    gender_ok = _word_containment(ours_gender, theirs_gender)

    ours_accent, theirs_accent = _norm(record.accent), _norm(expert.get("accent", ""))
    accent_ok = _word_containment(ours_accent, theirs_accent)

    detail = (f"age {ours_bucket} vs {theirs_bucket}; gender {ours_gender!r} vs "
              f"{theirs_gender!r}; accent {ours_accent!r} vs {theirs_accent!r}")
    return FilterVerdict("demographics", age_ok and gender_ok and accent_ok, None, detail)


def filter_paralinguistic_presence(record: AnnotationRecord,
                                   expert_presence: bool) -> FilterVerdict:
    ours = len(record.paralinguistic_events) > 0
    return FilterVerdict(
        "paralinguistic_presence", ours == bool(expert_presence), None,
        f"record={ours}, expert={bool(expert_presence)}",
    )


# ── cascade ──────────────────────────────────────────────────────────────────

FILTER_NAMES = (
    "transcription_error",
    "emotion_polarity",
    "intensity",
    "demographics",
    "paralinguistic_presence",
)

# CLI aliases
FILTER_ALIASES = {
    "wer": "transcription_error",
    "cer": "transcription_error",
    "emotion": "emotion_polarity",
    "intensity": "intensity",
    "demographics": "demographics",
    "para": "paralinguistic_presence",
}


@dataclass
class CascadeConfig:
    filters: tuple[str, ...] = FILTER_NAMES
    threshold: float = 0.30
    polarity_map: PolarityMap = field(default_factory=lambda: DEFAULT_POLARITY_MAP)
    intensity_scale: IntensityScale = field(default_factory=lambda: DEFAULT_INTENSITY_SCALE)
    fail_open: bool = False
    age_buckets: tuple = DEFAULT_AGE_BUCKETS
    retries: int = 3
    backoff_s: float = 0.05


@dataclass
class CascadeStats:
    evaluated: int = 0
    survivors: int = 0
    rejections: dict = field(default_factory=dict)   # filter_name -> count
    errors: int = 0

    def to_dict(self) -> dict:
        return {
            "evaluated": self.evaluated,
            "survivors": self.survivors,
            "rejections": dict(self.rejections),
            "errors": self.errors,
        }


def _expert_verdicts(record: AnnotationRecord, expert, config: CascadeConfig) -> dict:
    """All enabled verdicts for one record (no short-circuiting)."""
    verdicts: dict[str, FilterVerdict] = {}

    def call(fn, *args):
        return call_with_retries(fn, *args, retries=config.retries,
                                 backoff_s=config.backoff_s)

    for name in config.filters:
        try:
            if name == "transcription_error":
                transcript = call(expert.transcribe, record.audio_path, record.language.value)
                verdict = filter_transcription_error(record, transcript, config.threshold)
            elif name == "emotion_polarity":
                doc = call(expert.classify, "emotion", {"audio": record.audio_path})
                verdict = filter_emotion_polarity(record, doc["label"], config.polarity_map)
            elif name == "intensity":
                doc = call(expert.classify, "intensity", {"audio": record.audio_path})
                verdict = filter_intensity(record, doc["pitch"], doc["rate"],
                                           config.intensity_scale, config.fail_open)
            elif name == "demographics":
                doc = call(expert.classify, "demographics", {"audio": record.audio_path})
                verdict = filter_demographics(record, doc, config.age_buckets)
            elif name == "paralinguistic_presence":
                doc = call(expert.classify, "paralinguistic", {"audio": record.audio_path})
                verdict = filter_paralinguistic_presence(record, doc["present"])
            else:
                raise ValueError(f"unknown filter {name!r}")
        except (BackendUnavailableError, UnparseableResponseError,
                EmptyReferenceError, KeyError) as exc:
            verdict = FilterVerdict(name, False, None, f"error: {exc}")
        verdicts[name] = verdict
    return verdicts


def run_cascade(entries: list, expert, config: CascadeConfig | None = None):
    """Filter a manifest; returns (survivor entries, CascadeStats).

    Every entry's quality map is annotated with all verdicts, pass or fail,
    so rejection attribution is inspectable downstream.
    """
    config = config or CascadeConfig()
    stats = CascadeStats(rejections={name: 0 for name in config.filters})
    survivors: list[ManifestEntry] = []
    for entry in entries:
        if isinstance(entry, AnnotationRecord):
            entry = ManifestEntry(entry)
        stats.evaluated += 1
        verdicts = _expert_verdicts(entry.record, expert, config)
        entry.quality = dict(entry.quality or {})
        for name, verdict in verdicts.items():
            entry.quality[name] = verdict.to_dict()
            if not verdict.passed:
                stats.rejections[name] += 1
            if verdict.detail.startswith("error:"):
                stats.errors += 1
        if all(v.passed for v in verdicts.values()):
            stats.survivors += 1
            survivors.append(entry)
    return survivors, stats
