"""Curriculum mixer: formulates training instances from annotation records
and emits per-stage manifests at fixed mixing ratios.

Three instance kinds: single-dimension MCQs (Type I, any dimension except
tagged transcription), single-dimension open QA (Type II, all 14
dimensions), and full-structure JSON generation (Type III, the complete
validated record as the target).  Stage mixes: stage 1 = 60/40 I/II,
stage 2 = 20/40/40 I/II/III, stage 3 = 100% III.  Kind counts use
largest-remainder rounding (each deviates from ratio*total by less than one
instance and they sum exactly to total), sampling is seeded and switches to
with-replacement only when the request exceeds the pool.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .backends import DEFAULT_RETRIES
from .benchmark import DEFAULT_N_OPTIONS, generate_mcq
from .schema import Dimension, ManifestEntry, emit_record

logger = logging.getLogger(__name__)


class InstanceKind(str, Enum):
    TYPE_I_MCQ = "TypeI_MCQ"
    TYPE_II_OPEN_QA = "TypeII_OpenQA"
    TYPE_III_FULL_JSON = "TypeIII_FullJson"


STAGE_RATIOS: dict[int, dict[InstanceKind, float]] = {
    1: {InstanceKind.TYPE_I_MCQ: 0.6, InstanceKind.TYPE_II_OPEN_QA: 0.4},
    2: {
        InstanceKind.TYPE_I_MCQ: 0.2,
        InstanceKind.TYPE_II_OPEN_QA: 0.4,
        InstanceKind.TYPE_III_FULL_JSON: 0.4,
    },
    3: {InstanceKind.TYPE_III_FULL_JSON: 1.0},
}

TYPE_I_DIMENSIONS = tuple(d for d in Dimension if d is not Dimension.TPT)
TYPE_II_DIMENSIONS = tuple(Dimension)

OPEN_QA_TEMPLATES: dict[Dimension, str] = {
    Dimension.GEN: "Describe the gender characteristics of the speaker's voice.",
    Dimension.AGE: "Estimate the speaker's age group and describe the vocal cues behind your judgment.",
    Dimension.ACC: "Identify and describe the accent heard in this speech.",
    Dimension.PIT: "Describe the pitch characteristics of the speaker's voice.",
    Dimension.SR: "Describe the speaker's speaking rate.",
    Dimension.RHY: "Analyze the rhythmic features of this speech.",
    Dimension.VT: "Describe the texture of the speaker's voice.",
    Dimension.EMO: "Describe the emotional state conveyed by the speaker.",
    Dimension.TON: "Describe the speaker's tone.",
    Dimension.CI: "What can be inferred about the context of this recording? Explain.",
    Dimension.BS: "Describe any background sounds present in this recording.",
    Dimension.AE: "Describe the acoustic environment in which this speech was recorded.",
    Dimension.PE: "Identify the paralinguistic events in this speech.",
    Dimension.TPT: "Transcribe the speech, inserting paralinguistic tags at the positions where they occur.",
}

FULL_JSON_PROMPT = (
    "Analyze this speech and output its complete structured annotation as a "
    "single JSON object covering all 14 dimensions."
)

_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass
class TrainingInstance:
    kind: InstanceKind
    input: dict                      # {"prompt": ..., "audio": ...}
    target: str | dict
    source_utterance_id: str
    dimension: Dimension | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "input": self.input,
            "target": self.target,
            "source_utterance_id": self.source_utterance_id,
            "dimension": self.dimension.value if self.dimension else None,
        }


def _record_of(entry):
    return entry.record if isinstance(entry, ManifestEntry) else entry


def _open_qa_target(record, dimension: Dimension) -> str:
    if dimension is Dimension.PE:
        categories = [t.category for t in record.paralinguistic_events]
        return ", ".join(categories) if categories else "No paralinguistic events."
    if dimension is Dimension.TPT:
        return record.transcript_tagged
    return record.dimension_value(dimension)


def formulate(
    record,
    kind: InstanceKind,
    dimension: Dimension | None = None,
    mcq_client=None,
    *,
    n_options: int = DEFAULT_N_OPTIONS,
    seed: int = 0,
    retries: int = DEFAULT_RETRIES,
) -> TrainingInstance:
    """One training instance from one record.  Type I delegates stem and
    option synthesis (plus validation) to the MCQ generator and targets the
    correct option letter; Type II pairs a dimension's open question with
    the record's description; Type III targets the full structure."""
    record = _record_of(record)
    kind = InstanceKind(kind)

    if kind is InstanceKind.TYPE_III_FULL_JSON:
        if dimension is not None:
            raise ValueError("Type III instances carry no dimension")
        return TrainingInstance(
            kind=kind,
            input={"prompt": FULL_JSON_PROMPT, "audio": record.audio_path},
            target=emit_record(record),
            source_utterance_id=record.utterance_id,
        )

    if dimension is None:
        raise ValueError(f"{kind.value} requires a dimension")
    dimension = Dimension(dimension)

    if kind is InstanceKind.TYPE_I_MCQ:
        if dimension is Dimension.TPT:
            raise ValueError("Type I excludes tagged transcription (TPT)")
        if mcq_client is None:
            raise ValueError("Type I requires an MCQ backend")
        item = generate_mcq(
            record, dimension, mcq_client, n_options, seed=seed, retries=retries,
        )
        rendered = "\n".join(
            f"{_LETTERS[i]}. {option.text}" for i, option in enumerate(item.options)
        )
        return TrainingInstance(
            kind=kind,
            input={"prompt": f"{item.stem}\n{rendered}", "audio": record.audio_path},
            target=_LETTERS[item.answer_index],
            source_utterance_id=record.utterance_id,
            dimension=dimension,
        )

    return TrainingInstance(
        kind=kind,
        input={"prompt": OPEN_QA_TEMPLATES[dimension], "audio": record.audio_path},
        target=_open_qa_target(record, dimension),
        source_utterance_id=record.utterance_id,
        dimension=dimension,
    )


# ── stage construction ───────────────────────────────────────────────────────

def largest_remainder(ratios: dict, total_n: int) -> dict:
    """Integer counts per key: floor(ratio*total), then hand the leftover
    units to the largest fractional remainders (ties broken by key order).
    Counts sum exactly to total_n and each is within 1 of ratio*total_n."""
    if total_n < 0:
        raise ValueError("total_n must be non-negative")
    if ratios and abs(sum(ratios.values()) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios.values())}")
    keys = list(ratios)
    quotas = {k: ratios[k] * total_n for k in keys}
    counts = {k: math.floor(quotas[k]) for k in keys}
    leftover = total_n - sum(counts.values())
    by_remainder = sorted(
        keys, key=lambda k: (-(quotas[k] - counts[k]), keys.index(k))
    )
    for k in by_remainder[:leftover]:
        counts[k] += 1
    return counts


def build_stage(
    entries: list,
    stage: int,
    total_n: int,
    seed: int,
    *,
    mcq_client=None,
    n_options: int = DEFAULT_N_OPTIONS,
    retries: int = DEFAULT_RETRIES,
) -> list[TrainingInstance]:
    """Materialize one curriculum stage: largest-remainder kind counts,
    seeded record draws (with replacement only when the pool is short),
    uniform dimension choice for Types I/II, and a final seeded shuffle."""
    if stage not in STAGE_RATIOS:
        raise ValueError(f"stage must be one of {sorted(STAGE_RATIOS)}, got {stage}")
    records = [_record_of(e) for e in entries]
    if total_n > 0 and not records:
        raise ValueError("no records to mix")
    counts = largest_remainder(STAGE_RATIOS[stage], total_n)

    instances: list[TrainingInstance] = []
    for kind, count in counts.items():
        if count == 0:
            continue
        rng = random.Random(f"{seed}:stage{stage}:{kind.value}")
        if count <= len(records):
            chosen = rng.sample(records, k=count)
        else:
            logger.info(
                "stage %d %s: %d instances from %d records (with replacement)",
                stage, kind.value, count, len(records),
            )
            chosen = rng.choices(records, k=count)
        if kind is InstanceKind.TYPE_I_MCQ:
            dimensions = [rng.choice(TYPE_I_DIMENSIONS) for _ in chosen]
        elif kind is InstanceKind.TYPE_II_OPEN_QA:
            dimensions = [rng.choice(TYPE_II_DIMENSIONS) for _ in chosen]
        else:
            dimensions = [None] * len(chosen)
        for record, dimension in zip(chosen, dimensions):
            instances.append(formulate(
                record, kind, dimension, mcq_client,
                n_options=n_options, seed=seed, retries=retries,
            ))

    random.Random(f"{seed}:stage{stage}:shuffle").shuffle(instances)
    return instances


def realized_ratios(instances: list[TrainingInstance]) -> dict:
    counts: dict[str, int] = {}
    for instance in instances:
        counts[instance.kind.value] = counts.get(instance.kind.value, 0) + 1
    total = len(instances)
    return {
        "total": total,
        "counts": counts,
        "fractions": {k: (c / total if total else 0.0) for k, c in counts.items()},
    }


def emit_manifests(
    stages: dict[int, list[TrainingInstance]],
    out_dir,
) -> dict:
    """One JSONL manifest per stage plus a summary of realized ratios.
    Output is byte-identical across re-runs with the same inputs."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    summary: dict = {"stages": {}}
    for stage in sorted(stages):
        instances = stages[stage]
        path = root / f"stage{stage}.jsonl"
        with path.open("w", encoding="utf-8") as handle:
            for instance in instances:
                handle.write(
                    json.dumps(instance.to_dict(), ensure_ascii=False, sort_keys=True) + "\n"
                )
        summary["stages"][str(stage)] = {
            "path": path.name,
            **realized_ratios(instances),
        }
    with (root / "summary.json").open("w", encoding="utf-8") as handle:
        json.dump(summary, handle, ensure_ascii=False, sort_keys=True, indent=2)
        handle.write("\n")
    return summary


def mix_all(
    entries: list,
    plan: dict,
    seed: int,
    out_dir,
    *,
    mcq_client=None,
    n_options: int = DEFAULT_N_OPTIONS,
    retries: int = DEFAULT_RETRIES,
) -> dict:
    """Build every stage in `plan` ({"1": n1, "2": n2, "3": n3}, or nested
    under a "stages" key) and emit manifests + summary."""
    stage_plan = plan.get("stages", plan)
    stages = {}
    for stage_key, total_n in stage_plan.items():
        stage = int(stage_key)
        stages[stage] = build_stage(
            entries, stage, int(total_n), seed,
            mcq_client=mcq_client, n_options=n_options, retries=retries,
        )
    return emit_manifests(stages, out_dir)
