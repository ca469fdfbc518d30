"""Command-line entry points.

    speechforge chunk        plan safe cuts over long recordings
    speechforge annotate     run macro / micro / ingest annotation stages
    speechforge validate     cross-validation cascade over a manifest
    speechforge score-tpt    score tagged transcriptions against references
    speechforge build-bench  build a benchmark package
    speechforge eval         evaluate a model backend over a package
    speechforge mix          materialize curriculum training mixes
    speechforge review       serve / export the human-review queue

Backends are given as http(s) URLs (wire contract) or as bundled
deterministic mocks ("mock:echo", "mock:oracle", "mock:mcq",
"mock:fixed-A", "mock:containment").
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .annotation import (
    ChunkWork,
    Stage1Result,
    run_ingest,
    run_stage1,
    run_stage2,
)
from .benchmark import (
    DEFAULT_CONTROL_FRACTION,
    DEFAULT_N_OPTIONS,
    build_package,
    load_package,
    normalize_targets,
)
from .chunking import (
    DetectorSource,
    TimedUtterance,
    apply_cuts,
    complement_silences,
    merge_speech_intervals,
    plan_cuts,
)
from .crossval import FILTER_ALIASES, FILTER_NAMES, CascadeConfig, run_cascade
from .evaluation import Protocol, evaluate_package
from .metrics import compute_pata, mean_pata
from .mixing import build_stage, mix_all, realized_ratios
from .mocks import resolve_backend
from .review import ReviewQueue
from .schema import read_manifest, write_manifest


def _read_jsonl(path) -> list[dict]:
    docs = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                docs.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SystemExit(f"{path} line {line_no}: not valid JSON") from exc
    return docs


def _write_jsonl(path, docs) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for doc in docs:
            handle.write(json.dumps(doc, ensure_ascii=False, sort_keys=True) + "\n")


def _load_json(path):
    with Path(path).open("r", encoding="utf-8") as handle:
        return json.load(handle)


def _print(doc) -> None:
    print(json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True))


def _parse_window(text: str) -> tuple[float, float]:
    lo, _, hi = text.partition(":")
    try:
        return float(lo), float(hi)
    except ValueError:
        raise SystemExit(f"--window must look like 300:360, got {text!r}") from None


# ── chunk ────────────────────────────────────────────────────────────────────

def cmd_chunk(args) -> int:
    recordings = _read_jsonl(args.audio_manifest)
    stamps_a = _read_jsonl(args.timestamps_a)
    stamps_b = _read_jsonl(args.timestamps_b)
    window = _parse_window(args.window)

    def by_recording(stamps, source):
        grouped: dict[str, list[TimedUtterance]] = {}
        for doc in stamps:
            grouped.setdefault(doc["recording_id"], []).append(TimedUtterance(
                start_s=float(doc["start_s"]),
                end_s=float(doc["end_s"]),
                source=source,
                text=doc.get("transcript"),
                speaker_id=doc.get("speaker_id"),
            ))
        return grouped

    grouped_a = by_recording(stamps_a, DetectorSource.A)
    grouped_b = by_recording(stamps_b, DetectorSource.B)

    out = Path(args.out)
    plans_dir = out / "plans"
    plans_dir.mkdir(parents=True, exist_ok=True)
    works: list[dict] = []
    fallback_total = 0
    for rec in recordings:
        rid = rec["recording_id"]
        total = float(rec.get("total_s", rec.get("duration_s", 0.0)))
        a = grouped_a.get(rid, [])
        b = grouped_b.get(rid, [])
        union = merge_speech_intervals(a, b)
        silences = complement_silences(union, total, args.min_silence)
        plan = plan_cuts(silences, total, window)
        chunks = apply_cuts(plan, a + b)
        fallback_total += len(plan.fallback_cuts)

        plan_doc = {
            "recording_id": rid,
            "audio": rec["audio"],
            "total_s": total,
            "window": list(window),
            **plan.to_dict(),
        }
        with (plans_dir / f"{rid}.json").open("w", encoding="utf-8") as handle:
            json.dump(plan_doc, handle, ensure_ascii=False, sort_keys=True, indent=2)
            handle.write("\n")

        for index, chunk in enumerate(chunks):
            primary = [u for u in chunk.utterances if u.source is DetectorSource.A]
            if not primary:
                continue
            chunk.utterances = primary
            work = ChunkWork.from_chunk(
                chunk, rec["audio"], f"{rid}-c{index:03d}",
                language=rec.get("language", "en"),
            )
            works.append(work.to_dict())

    _write_jsonl(out / "chunks.jsonl", works)
    _print({
        "recordings": len(recordings),
        "chunks": len(works),
        "fallback_cuts": fallback_total,
        "out": str(out),
    })
    return 0


# ── annotate ─────────────────────────────────────────────────────────────────

def cmd_annotate(args) -> int:
    store = None
    store_path = Path(args.store) if args.store else None
    if store_path is not None:
        store = _load_json(store_path) if store_path.exists() else {}

    client = resolve_backend(args.backend, "annotator", {"language": args.language})
    docs = _read_jsonl(args.manifest)

    if args.stage == "1":
        works = [ChunkWork.from_dict(d) for d in docs]
        results, failures, skipped = run_stage1(works, client, store=store)
        _write_jsonl(args.out, [r.to_dict() for r in results])
        summary = {
            "stage": 1,
            "chunks": len(works),
            "results": len(results),
            "skipped": skipped,
            "failures": [f.to_dict() for f in failures],
        }
    elif args.stage == "2":
        results = [Stage1Result.from_dict(d) for d in docs]
        outcome = run_stage2(results, client, args.concurrency, store=store)
        write_manifest(outcome.records, args.out)
        summary = {"stage": 2, **outcome.to_dict()}
    else:
        outcome = run_ingest(docs, client, args.concurrency, store=store)
        write_manifest(outcome.records, args.out)
        summary = {"stage": "ingest", **outcome.to_dict()}

    if store_path is not None:
        store_path.parent.mkdir(parents=True, exist_ok=True)
        with store_path.open("w", encoding="utf-8") as handle:
            json.dump(store, handle, ensure_ascii=False, sort_keys=True)
            handle.write("\n")
    _print(summary)
    return 0


# ── validate (cross-validation cascade) ──────────────────────────────────────

def cmd_validate(args) -> int:
    entries = read_manifest(args.manifest)
    backend_map = _load_json(args.backend_map)
    if "expert" not in backend_map:
        raise SystemExit("--backend-map config must name an 'expert' backend")
    expert = resolve_backend(backend_map["expert"], "expert", {"entries": entries})

    names = []
    for raw in args.filters.split(","):
        raw = raw.strip()
        if not raw:
            continue
        name = FILTER_ALIASES.get(raw, raw)
        if name not in FILTER_NAMES:
            raise SystemExit(f"unknown filter {raw!r} (known: {', '.join(FILTER_ALIASES)})")
        names.append(name)
    config = CascadeConfig(
        filters=tuple(names) or FILTER_NAMES,
        threshold=args.threshold,
        fail_open=args.fail_open,
    )
    survivors, stats = run_cascade(entries, expert, config)
    write_manifest(survivors, args.out)
    report = stats.to_dict()
    if args.report:
        with Path(args.report).open("w", encoding="utf-8") as handle:
            json.dump(report, handle, ensure_ascii=False, sort_keys=True, indent=2)
            handle.write("\n")
    _print(report)
    return 0


# ── score-tpt ────────────────────────────────────────────────────────────────

def _pick(doc: dict, keys: tuple[str, ...], what: str) -> str:
    for key in keys:
        if key in doc:
            return str(doc[key])
    raise SystemExit(f"line {doc!r} has no {what} field (looked for {', '.join(keys)})")


def cmd_score_tpt(args) -> int:
    refs = _read_jsonl(args.refs)
    hyps = _read_jsonl(args.hyps)
    hyp_by_id = {
        _pick(d, ("utterance_id", "item_id"), "id"):
        _pick(d, ("transcript_tagged", "hypothesis_tagged", "tagged", "text"), "hypothesis")
        for d in hyps
    }
    scores = []
    for doc in refs:
        ref_id = _pick(doc, ("utterance_id", "item_id"), "id")
        reference = _pick(doc, ("transcript_tagged", "reference_tagged", "tagged"), "reference")
        if ref_id not in hyp_by_id:
            raise SystemExit(f"no hypothesis for {ref_id!r}")
        score = compute_pata(reference, hyp_by_id[ref_id], args.lang, alpha=args.alpha)
        scores.append(score)
        print(json.dumps({"utterance_id": ref_id, **score.to_dict()},
                         ensure_ascii=False, sort_keys=True))
    print(json.dumps({"corpus_mean_pata": mean_pata(scores), "n": len(scores)},
                     ensure_ascii=False, sort_keys=True))
    return 0


# ── build-bench ──────────────────────────────────────────────────────────────

def cmd_build_bench(args) -> int:
    entries = read_manifest(args.manifest)
    targets = normalize_targets(_load_json(args.targets))
    client = resolve_backend(args.backend, "mcq")
    package = build_package(
        entries, targets, client, args.seed, args.out,
        n_options=args.n_options,
        control_fraction=args.control_fraction,
        require_err=args.require_err,
    )
    _print({
        "manifests": package.manifest_count(),
        "items": package.item_count(),
        "tpt_refs": sum(len(v) for v in package.tpt_refs.values()),
        "controls": len(package.controls),
        "out": str(package.root),
    })
    return 0


# ── eval ─────────────────────────────────────────────────────────────────────

def cmd_eval(args) -> int:
    package = load_package(args.bench)
    model = resolve_backend(args.model, "model")
    aligner = resolve_backend(args.aligner, "aligner") if args.aligner else None
    run = evaluate_package(
        package, model,
        protocol=Protocol(args.protocol),
        aligner=aligner,
        skip_unparseable=args.skip_unparseable,
        avg_mode=args.avg_mode,
        alpha=args.alpha,
    )
    if args.out:
        with Path(args.out).open("w", encoding="utf-8") as handle:
            json.dump(run.to_dict(), handle, ensure_ascii=False, sort_keys=True, indent=2)
            handle.write("\n")
    if args.table:
        Path(args.table).write_text(run.report.render_markdown(), encoding="utf-8")
    _print({
        "avg": run.report.avg,
        "cells": len(run.report.cells),
        "missing_cells": len(run.report.missing_cells),
        "answers": len(run.answers),
        "tpt_items": len(run.pata_scores),
    })
    return 0


# ── mix ──────────────────────────────────────────────────────────────────────

def cmd_mix(args) -> int:
    entries = read_manifest(args.manifest)
    client = resolve_backend(args.backend, "mcq") if args.backend else None

    if args.mode == "all":
        if not args.plan:
            raise SystemExit("mix all requires --plan")
        summary = mix_all(entries, _load_json(args.plan), args.seed, args.out,
                          mcq_client=client)
        _print(summary)
        return 0

    if args.stage is None or args.n is None:
        raise SystemExit("mix requires --stage and --n (or the 'all' mode)")
    instances = build_stage(entries, args.stage, args.n, args.seed, mcq_client=client)
    _write_jsonl(args.out, [i.to_dict() for i in instances])
    _print({"stage": args.stage, **realized_ratios(instances)})
    return 0


# ── review ───────────────────────────────────────────────────────────────────

def cmd_review_serve(args) -> int:
    from .review import DuplicateItemError
    from .review_api import serve

    queue = ReviewQueue(log_path=args.log)
    if args.queue:
        for entry in read_manifest(args.queue):
            try:
                queue.enqueue(entry.record)
            except DuplicateItemError:
                pass   # already materialized from the event log
    print(f"serving review queue ({len(queue.items)} items) on "
          f"http://{args.host}:{args.port}", file=sys.stderr)
    serve(queue, host=args.host, port=args.port)
    return 0


def cmd_review_export(args) -> int:
    queue = ReviewQueue(log_path=args.log)
    retained = queue.export_retained()
    write_manifest(retained, args.out)
    _print({"retained": len(retained), "states": queue.stats(), "out": str(args.out)})
    return 0


# ── parser ───────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speechforge",
        description="speech-annotation corpus pipeline, benchmark builder, and eval harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chunk", help="plan safe cuts over long recordings")
    p.add_argument("--audio-manifest", required=True)
    p.add_argument("--timestamps-a", required=True)
    p.add_argument("--timestamps-b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", default="300:360")
    p.add_argument("--min-silence", type=float, default=0.2)
    p.set_defaults(func=cmd_chunk)

    p = sub.add_parser("annotate", help="run an annotation stage against a backend")
    p.add_argument("--stage", required=True, choices=["1", "2", "ingest"])
    p.add_argument("--manifest", required=True)
    p.add_argument("--backend", required=True)
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--store", help="content-addressed store (JSON) for idempotent re-runs")
    p.add_argument("--language", default="en")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("validate", help="cross-validation cascade over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--filters", default="wer,emotion,intensity,demographics,para")
    p.add_argument("--backend-map", required=True)
    p.add_argument("--threshold", type=float, default=0.30)
    p.add_argument("--fail-open", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("score-tpt", help="score tagged transcriptions against references")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--lang", required=True, choices=["zh", "en"])
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_score_tpt)

    p = sub.add_parser("build-bench", help="build a benchmark package")
    p.add_argument("--manifest", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--backend", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-options", type=int, default=DEFAULT_N_OPTIONS)
    p.add_argument("--control-fraction", type=float, default=DEFAULT_CONTROL_FRACTION)
    p.add_argument("--require-err", action="store_true",
                   help="reject records without a measured transcription error")
    p.set_defaults(func=cmd_build_bench)

    p = sub.add_parser("eval", help="evaluate a model backend over a package")
    p.add_argument("--bench", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--protocol", default="direct", choices=["direct", "aligner"])
    p.add_argument("--aligner")
    p.add_argument("--out")
    p.add_argument("--table")
    p.add_argument("--skip-unparseable", action="store_true")
    p.add_argument("--avg-mode", default="cells", choices=["cells", "tasks"])
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mix", help="materialize curriculum training mixes")
    p.add_argument("mode", nargs="?", choices=["all"])
    p.add_argument("--manifest", required=True)
    p.add_argument("--stage", type=int, choices=[1, 2, 3])
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--plan", help="stage -> instance count config (mix all)")
    p.add_argument("--backend", help="MCQ backend for Type I instances")
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("review", help="human review workflow")
    rsub = p.add_subparsers(dest="action", required=True)
    ps = rsub.add_parser("serve", help="serve the review API")
    ps.add_argument("--queue", help="manifest of records to enqueue")
    ps.add_argument("--log", help="append-only event log (replayed on restart)")
    ps.add_argument("--host", default="127.0.0.1")
    ps.add_argument("--port", type=int, default=8787)
    ps.set_defaults(func=cmd_review_serve)
    pe = rsub.add_parser("export", help="export retained records from an event log")
    pe.add_argument("--log", required=True)
    pe.add_argument("--out", required=True)
    pe.set_defaults(func=cmd_review_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
