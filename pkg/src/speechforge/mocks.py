"""Deterministic in-process mock backends.

Every pluggable backend role has a mock twin here so the whole pipeline is
testable (and CLI-drivable) offline.  Mocks derive their answers from stable
content hashes — identical inputs always produce identical outputs.

The annotator mock and the expert mock share ``derive_profile`` so a record
produced by the one is, by construction, agreed with by the other; planted
disagreements are injected through explicit per-utterance overrides.
"""

from __future__ import annotations

import hashlib

from .metrics import TokenKind, tokenize
from .vocab import DEFAULT_TAG_VOCABULARY

# description pools; every entry is consistent with the default cross-check
# lexicons (polarity / intensity / age buckets), so derived corpora survive
# the cascade unless a test plants a violation
_EMOTIONS = [
    ("calm and composed throughout", "neutral"),
    ("bright, joyful energy", "happy"),
    ("deeply sorrowful, close to breaking", "sad"),
    ("irritated and tense under the surface", "angry"),
]
_PITCHES = [
    ("low-pitched with a relatively flat intonation", "low"),
    ("medium pitch with gentle rises", "medium"),
    ("high-pitched and piercing at stressed words", "high"),
]
_RATES = [
    ("slow, deliberate pace with long holds", "low"),
    ("steady medium pace", "medium"),
    ("rapid, hurried delivery", "high"),
]
_GENDERS = ["male", "female"]
_AGES = [
    "a teenager, likely 13-18",
    "young adult voice, mid-20s",
    "middle-aged, settled delivery",
    "an elderly senior speaker",
]
_ACCENTS = ["north american accent", "british accent", "mandarin-accented speech"]
_RHYTHMS = [
    "even rhythm with clause-final pauses",
    "syncopated rhythm, clipped phrase endings",
    "flowing rhythm, few pauses",
]
_TEXTURES = ["breathy and soft", "clear and resonant", "gravelly with vocal fry"]
_TONES = ["matter-of-fact informative tone", "confiding, intimate tone", "urgent persuasive tone"]
_CONTEXTS = [
    "recounting a past event to a friend",
    "giving directions over the phone",
    "narrating steps while performing them",
]
_BACKGROUNDS = ["faint keyboard clicks", "distant street traffic", "no audible background events"]
_ENVIRONMENTS = ["small untreated room", "quiet studio booth", "open-plan office"]


def _h(key: str) -> int:
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


def derive_profile(key: str) -> dict:
    """Deterministic full attribute profile for a given audio reference."""
    h = _h(key)
    emotion, emotion_label = _EMOTIONS[h % len(_EMOTIONS)]
    pitch, pitch_level = _PITCHES[(h >> 3) % len(_PITCHES)]
    rate, rate_level = _RATES[(h >> 6) % len(_RATES)]
    return {
        "gender": _GENDERS[(h >> 9) % len(_GENDERS)],
        "age": _AGES[(h >> 12) % len(_AGES)],
        "accent": _ACCENTS[(h >> 15) % len(_ACCENTS)],
        "pitch": pitch,
        "pitch_level": pitch_level,
        "speaking_rate": rate,
        "rate_level": rate_level,
        "rhythm": _RHYTHMS[(h >> 18) % len(_RHYTHMS)],
        "voice_texture": _TEXTURES[(h >> 21) % len(_TEXTURES)],
        "emotion": emotion,
        "emotion_label": emotion_label,
        "tone": _TONES[(h >> 24) % len(_TONES)],
        "contextual_inference": _CONTEXTS[(h >> 27) % len(_CONTEXTS)],
        "background_sound": _BACKGROUNDS[(h >> 30) % len(_BACKGROUNDS)],
        "acoustic_environment": _ENVIRONMENTS[(h >> 33) % len(_ENVIRONMENTS)],
        "tag_seed": h % 3,  # 0 -> leading Laughter tag in the tagged transcript
    }


def tags_from_tagged(tagged: str, language: str, vocabulary=DEFAULT_TAG_VOCABULARY) -> list[dict]:
    """Paralinguistic-event entries (category + anchor) parsed back out of a
    tagged transcript — keeps mock records internally consistent."""
    entries = []
    for index, token in enumerate(tokenize(tagged, language, vocabulary)):
        if token.kind is TokenKind.TAG:
            entries.append({"category": token.value, "anchor_index": index})
    return entries


class MockAnnotator:
    """Deterministic annotator covering macro, micro, and ingest stages.

    Knobs exist solely to exercise orchestrator error paths: shift_s moves
    calibrated timestamps, out_of_bounds pushes one utterance beyond the
    chunk, drop_field omits a record key, refine_background rewrites the
    inherited macro prior (diff-logged path).
    """

    def __init__(self, language: str = "en", shift_s: float = 0.0,
                 out_of_bounds: bool = False, drop_field: str | None = None,
                 refine_background: bool = False):
        self.language = language
        self.shift_s = shift_s
        self.out_of_bounds = out_of_bounds
        self.drop_field = drop_field
        self.refine_background = refine_background
        self.calls = {"macro": 0, "micro": 0, "ingest": 0}

    # -- wire-contract twin of AnnotatorClient.annotate ----------------------
    def annotate(self, stage: str, prompt_template_id: str, priors: dict, audio: str) -> dict:
        self.calls[stage] += 1
        if stage == "macro":
            return self._macro(priors, audio)
        if stage in ("micro", "ingest"):
            return self._micro(stage, priors, audio)
        raise ValueError(f"unknown stage {stage!r}")

    def _macro(self, priors: dict, audio: str) -> dict:
        chunk = priors["chunk"]
        profile = derive_profile(audio)
        utterances = []
        for i, utt in enumerate(priors["utterances"]):
            start = utt["start_s"] + self.shift_s
            end = utt["end_s"] + self.shift_s
            if self.out_of_bounds and i == len(priors["utterances"]) - 1:
                end = chunk["end_s"] + 5.0
            transcript = utt.get("transcript") or f"utterance {i} of {chunk.get('chunk_id', audio)}"
            seed = derive_profile(f"{audio}#{i}")["tag_seed"]
            tagged = f"<Laughter> {transcript}" if seed == 0 else transcript
            utterances.append({
                "start_s": start,
                "end_s": end,
                "transcript": transcript,
                "transcript_tagged": tagged,
                "speaker_id": utt.get("speaker_id"),
                "contextual_inference": profile["contextual_inference"],
                "background_sound": profile["background_sound"],
                "acoustic_environment": profile["acoustic_environment"],
            })
        return {"utterances": utterances, "dropped": []}

    def _micro(self, stage: str, priors: dict, audio: str) -> dict:
        utterance = priors.get("utterance", {})
        macro = priors.get("macro", {})
        metadata = priors.get("metadata", {})
        transcript = utterance.get("transcript") or metadata.get("transcript", "")
        tagged = macro.get("transcript_tagged") or metadata.get("transcript_tagged") or transcript
        profile = derive_profile(audio)
        language = priors.get("language", self.language)
        background = macro.get("background_sound") or profile["background_sound"]
        if self.refine_background:
            background = f"{background}, with a single door slam"
        start = utterance.get("start_s")
        end = utterance.get("end_s")
        if start is not None and end is not None:
            duration = round(end - start, 6)
        else:
            duration = float(metadata.get("duration_s", 5.0))
        doc = {
            "utterance_id": utterance.get("utterance_id") or metadata.get("utterance_id")
            or f"utt-{_h(audio) % 10**10:010d}",
            "audio_path": audio,
            "language": language,
            "duration_s": duration,
            "transcript": transcript,
            "transcript_tagged": tagged,
            "gender": profile["gender"],
            "age": profile["age"],
            "accent": profile["accent"],
            "pitch": profile["pitch"],
            "speaking_rate": profile["speaking_rate"],
            "rhythm": profile["rhythm"],
            "voice_texture": profile["voice_texture"],
            "emotion": profile["emotion"],
            "tone": profile["tone"],
            "contextual_inference": macro.get("contextual_inference") or profile["contextual_inference"],
            "background_sound": background,
            "acoustic_environment": macro.get("acoustic_environment") or profile["acoustic_environment"],
            "paralinguistic_events": tags_from_tagged(tagged, language),
            "schema_version": "1.0",
            "provenance": "pipeline_stage2" if stage == "micro" else "external_ingest",
        }
        if self.drop_field:
            doc.pop(self.drop_field, None)
        return doc


class OracleExpert:
    """Expert mock that agrees with the manifest it was built over, except
    where an override plants a disagreement.

    overrides: utterance_id -> dict with any of: transcript, emotion_label,
    pitch_level, rate_level, age, gender, accent, para_present.
    """

    def __init__(self, entries, overrides: dict | None = None):
        self.by_audio = {}
        for entry in entries:
            record = getattr(entry, "record", entry)
            self.by_audio[record.audio_path] = record
        self.overrides = overrides or {}
        self.calls = 0

    def _override(self, record, key):
        return self.overrides.get(record.utterance_id, {}).get(key)

    def transcribe(self, audio: str, language: str) -> str:
        self.calls += 1
        record = self.by_audio[audio]
        return self._override(record, "transcript") or record.transcript

    def classify(self, kind: str, payload: dict) -> dict:
        self.calls += 1
        record = self.by_audio[payload["audio"]]
        if kind == "emotion":
            return {"label": self._override(record, "emotion_label") or record.emotion}
        if kind == "intensity":
            from .crossval import DEFAULT_INTENSITY_SCALE
            return {
                "pitch": self._override(record, "pitch_level")
                or DEFAULT_INTENSITY_SCALE.quantize_pitch(record.pitch).value,
                "rate": self._override(record, "rate_level")
                or DEFAULT_INTENSITY_SCALE.quantize_rate(record.speaking_rate).value,
            }
        if kind == "demographics":
            return {
                "age": self._override(record, "age") or record.age,
                "gender": self._override(record, "gender") or record.gender,
                "accent": self._override(record, "accent") or record.accent,
            }
        if kind == "paralinguistic":
            present = self._override(record, "para_present")
            if present is None:
                present = len(record.paralinguistic_events) > 0
            return {"present": present}
        raise ValueError(f"unknown classifier kind {kind!r}")


# ── MCQ generation ───────────────────────────────────────────────────────────

STEM_TEMPLATES = {
    "GEN": "What is the gender of the speaker in this speech?",
    "AGE": "Which age group does the speaker most likely belong to?",
    "ACC": "Which accent does the speaker exhibit?",
    "PIT": "How would you characterize the pitch of the speaker's voice?",
    "SR": "How would you characterize the speaker's speaking rate?",
    "RHY": "Which description best matches the rhythm of the speech?",
    "VT": "Which description best matches the speaker's voice texture?",
    "EMO": "What is the emotional state of the speaker?",
    "TON": "Which tone does the speaker adopt?",
    "CI": "What can be inferred about the context of this speech?",
    "BS": "What background sound is present in this recording?",
    "AE": "Which acoustic environment was this speech recorded in?",
    "PE": "Which paralinguistic event occurs in this speech?",
}


class MockMcqGenerator:
    """Deterministic stem/distractor synthesis with failure-mode knobs.

    mode: ok | duplicate | two_keys | short | missing_trap | no_key
    """

    def __init__(self, mode: str = "ok"):
        self.mode = mode
        self.calls = 0

    def generate(self, record_doc: dict, dimension: str, n_options: int,
                 semantic_conflict: bool = False) -> dict:
        self.calls += 1
        field_by_dim = {
            "GEN": "gender", "AGE": "age", "ACC": "accent", "PIT": "pitch",
            "SR": "speaking_rate", "RHY": "rhythm", "VT": "voice_texture",
            "EMO": "emotion", "TON": "tone", "CI": "contextual_inference",
            "BS": "background_sound", "AE": "acoustic_environment",
            "PE": "paralinguistic_events",
        }
        if dimension == "PE":
            events = record_doc.get("paralinguistic_events") or []
            truth = events[0]["category"] if events else "No paralinguistic event"
        else:
            truth = str(record_doc.get(field_by_dim[dimension], ""))
        transcript = record_doc.get("transcript", "")

        options = [{"text": truth, "klass": "GroundTruth"}]
        distractor_classes = ["FineGrainedAcoustic", "SemanticTrap", "Other"]
        if self.mode == "missing_trap":
            distractor_classes = ["FineGrainedAcoustic", "Other", "Other"]
        for k in range(n_options - 1):
            klass = distractor_classes[k % len(distractor_classes)]
            if klass == "SemanticTrap":
                text = f"As the words alone would suggest: {transcript[:40]} (misleading)"
            else:
                text = f"{truth} — plausible variant {k + 1}"
            options.append({"text": text, "klass": klass})

        if self.mode == "duplicate" and len(options) >= 3:
            options[2]["text"] = options[1]["text"]
        if self.mode == "two_keys" and len(options) >= 2:
            options[1]["klass"] = "GroundTruth"
        if self.mode == "no_key":
            options[0]["klass"] = "Other"
        if self.mode == "short":
            options = options[:3]

        return {"stem": STEM_TEMPLATES[dimension], "options": options}


# ── evaluation-side mocks ────────────────────────────────────────────────────

class MockModel:
    """Model under evaluation; scripted or fixed behavior for both tasks.

    answers: item_id -> raw text returned by /v1/choose (falls back to
    `fixed`); tpt: item_id -> tagged transcript for /v1/transcribe-tagged
    (falls back to `tpt_fixed`).
    """

    def __init__(self, fixed: str = "A", answers: dict | None = None,
                 tpt: dict | None = None, tpt_fixed: str = ""):
        self.fixed = fixed
        self.answers = answers or {}
        self.tpt = tpt or {}
        self.tpt_fixed = tpt_fixed
        self.calls = 0

    def choose(self, audio: str, stem: str, options: list[str], item_id: str = "") -> str:
        self.calls += 1
        return self.answers.get(item_id, self.fixed)

    def transcribe_tagged(self, audio: str, prompt: str, item_id: str = "") -> str:
        self.calls += 1
        return self.tpt.get(item_id, self.tpt_fixed)


class ContainmentAligner:
    """Maps free text onto the option whose text it contains (longest first)."""

    def __init__(self):
        self.calls = 0

    def align(self, response_text: str, options: list[str]) -> int | None:
        self.calls += 1
        best = None
        for index, option in enumerate(options):
            if option and option in response_text:
                if best is None or len(option) > len(options[best]):
                    best = index
        return best


# ── failure-injection wrappers ───────────────────────────────────────────────

class Flaky:
    """Fails the first `fail_times` calls (any method), then delegates."""

    def __init__(self, inner, fail_times: int = 1):
        self._inner = inner
        self._remaining = fail_times

    def __getattr__(self, name):
        target = getattr(self._inner, name)
        if not callable(target):
            return target

        def wrapper(*args, **kwargs):
            if self._remaining > 0:
                self._remaining -= 1
                raise ConnectionError("flaky mock: transient failure")
            return target(*args, **kwargs)

        return wrapper


class AlwaysDown:
    """Every call raises — the permanently unavailable backend."""

    def __getattr__(self, name):
        def wrapper(*args, **kwargs):
            raise ConnectionError("mock backend permanently down")

        return wrapper


def resolve_backend(spec: str, role: str, context: dict | None = None):
    """CLI backend resolution: an http(s) URL builds the wire-contract client
    for the role; a mock: spec builds the bundled deterministic mock."""
    from . import backends

    context = context or {}
    if spec.startswith(("http://", "https://")):
        cls = {
            "annotator": backends.AnnotatorClient,
            "expert": backends.ExpertClient,
            "mcq": backends.McqClient,
            "model": backends.ModelClient,
            "aligner": backends.AlignerClient,
        }[role]
        return cls(spec)
    if not spec.startswith("mock:"):
        raise ValueError(f"backend spec must be an http(s) URL or mock:<name>, got {spec!r}")
    name = spec[len("mock:"):]
    if role == "annotator" and name == "echo":
        return MockAnnotator(language=context.get("language", "en"))
    if role == "expert" and name == "oracle":
        return OracleExpert(context["entries"])
    if role == "mcq" and name == "mcq":
        return MockMcqGenerator()
    if role == "model" and name.startswith("fixed-"):
        return MockModel(fixed=name[len("fixed-"):].upper())
    if role == "model" and name == "silent":
        return MockModel(fixed="", tpt_fixed="")
    if role == "aligner" and name == "containment":
        return ContainmentAligner()
    raise ValueError(f"unknown mock backend {spec!r} for role {role!r}")
