"""Shared builders for test fixtures: canonical record documents that pass
validation, with overridable fields."""

from __future__ import annotations

from speechforge.schema import ManifestEntry, validate_record

EN_FIELDS = {
    "transcript": "i am doing fine today",
    "transcript_tagged": "i am doing fine today <Laughter>",
    "paralinguistic_events": [{"category": "Laughter", "anchor_index": 5}],
}

ZH_FIELDS = {
    "transcript": "我今天很好",
    "transcript_tagged": "我今天很好 <Laughter>",
    "paralinguistic_events": [{"category": "Laughter", "anchor_index": 5}],
}


def make_record_doc(utterance_id="utt-001", language="en", **overrides) -> dict:
    doc = {
        "utterance_id": utterance_id,
        "audio_path": f"/audio/{utterance_id}.wav",
        "language": language,
        "duration_s": 5.2,
        "gender": "Female",
        "age": "Young Adult",
        "accent": "American English",
        "pitch": "Medium",
        "speaking_rate": "Medium",
        "rhythm": "Steady and even",
        "voice_texture": "Clear and warm",
        "emotion": "Happy",
        "tone": "Friendly",
        "contextual_inference": "Casual phone catch-up with a friend",
        "background_sound": "None audible",
        "acoustic_environment": "Quiet indoor room",
        "schema_version": "1.0",
        "provenance": "pipeline_stage2",
    }
    doc.update(ZH_FIELDS if language == "zh" else EN_FIELDS)
    doc.update(overrides)
    return doc


def make_record(utterance_id="utt-001", language="en", **overrides):
    return validate_record(make_record_doc(utterance_id, language, **overrides))


def make_entry(utterance_id="utt-001", language="en", quality=None, **overrides):
    return ManifestEntry(make_record(utterance_id, language, **overrides), quality)
