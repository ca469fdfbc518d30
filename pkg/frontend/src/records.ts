/** Annotation record documents as the review service emits them, plus the
 * form-diff helpers the UI uses to decide between AcceptUnmodified and
 * Modify. */

export interface TagEvent {
  category: string;
  anchor_index: number;
}

export interface RecordDoc {
  utterance_id: string;
  audio_path: string;
  language: string;
  duration_s: number;
  transcript: string;
  transcript_tagged: string;
  gender: string;
  age: string;
  accent: string;
  pitch: string;
  speaking_rate: string;
  rhythm: string;
  voice_texture: string;
  emotion: string;
  tone: string;
  contextual_inference: string;
  background_sound: string;
  acoustic_environment: string;
  paralinguistic_events: TagEvent[];
  schema_version: string;
  provenance: string;
}

/** The twelve free-text dimension fields, in display order. */
export const TEXT_DIMENSIONS = [
  ["GEN", "gender", "Gender"],
  ["AGE", "age", "Age"],
  ["ACC", "accent", "Accent"],
  ["PIT", "pitch", "Pitch"],
  ["SR", "speaking_rate", "Speaking rate"],
  ["RHY", "rhythm", "Rhythm"],
  ["VT", "voice_texture", "Voice texture"],
  ["EMO", "emotion", "Emotion"],
  ["TON", "tone", "Tone"],
  ["CI", "contextual_inference", "Contextual inference"],
  ["BS", "background_sound", "Background sound"],
  ["AE", "acoustic_environment", "Acoustic environment"],
] as const;

export type TextDimensionField = (typeof TEXT_DIMENSIONS)[number][1];

/** All fourteen editable dimension fields (the twelve above plus the
 * paralinguistic event list and the tagged transcript). */
export const EDITABLE_FIELDS: readonly string[] = [
  ...TEXT_DIMENSIONS.map(([, field]) => field),
  "paralinguistic_events",
  "transcript_tagged",
];

/** "Laughter@5, Crying@2" <-> [{category, anchor_index}, ...]; "" <-> []. */
export function formatEvents(events: TagEvent[]): string {
  return events.map((e) => `${e.category}@${e.anchor_index}`).join(", ");
}

export function parseEvents(text: string): TagEvent[] {
  const trimmed = text.trim();
  if (!trimmed) return [];
  return trimmed.split(",").map((part) => {
    const match = /^\s*([A-Za-z][A-Za-z ]*?)\s*@\s*(\d+)\s*$/.exec(part);
    if (!match) {
      throw new Error(
        `cannot parse event ${JSON.stringify(part.trim())}; expected Category@index`,
      );
    }
    return { category: match[1]!, anchor_index: Number(match[2]) };
  });
}

function eventsEqual(a: TagEvent[], b: TagEvent[]): boolean {
  if (a.length !== b.length) return false;
  return a.every(
    (e, i) => e.category === b[i]!.category && e.anchor_index === b[i]!.anchor_index,
  );
}

export function cloneRecord(doc: RecordDoc): RecordDoc {
  return {
    ...doc,
    paralinguistic_events: doc.paralinguistic_events.map((e) => ({ ...e })),
  };
}

/** Field-level diff over every record field (not just the editable ones, so
 * nothing can change silently). */
export function changedFields(a: RecordDoc, b: RecordDoc): string[] {
  const changed: string[] = [];
  for (const key of Object.keys(a) as (keyof RecordDoc)[]) {
    if (key === "paralinguistic_events") {
      if (!eventsEqual(a.paralinguistic_events, b.paralinguistic_events)) {
        changed.push(key);
      }
    } else if (a[key] !== b[key]) {
      changed.push(key);
    }
  }
  return changed;
}

export function recordsEqual(a: RecordDoc, b: RecordDoc): boolean {
  return changedFields(a, b).length === 0;
}
