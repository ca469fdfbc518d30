/** Canonical record documents that pass the service's validation, mirroring
 * the fixtures the backend test suite uses. */

import type { RecordDoc } from "../src/records.js";

export function makeRecordDoc(
  utteranceId = "utt-001",
  overrides: Partial<RecordDoc> = {},
): RecordDoc {
  return {
    utterance_id: utteranceId,
    audio_path: `/audio/${utteranceId}.wav`,
    language: "en",
    duration_s: 5.2,
    transcript: "i am doing fine today",
    transcript_tagged: "i am doing fine today <Laughter>",
    paralinguistic_events: [{ category: "Laughter", anchor_index: 5 }],
    gender: "Female",
    age: "Young Adult",
    accent: "American English",
    pitch: "Medium",
    speaking_rate: "Medium",
    rhythm: "Steady and even",
    voice_texture: "Clear and warm",
    emotion: "Happy",
    tone: "Friendly",
    contextual_inference: "Casual phone catch-up with a friend",
    background_sound: "None audible",
    acoustic_environment: "Quiet indoor room",
    schema_version: "1.0",
    provenance: "pipeline_stage2",
    ...overrides,
  };
}
