"""Acceptance gate: one test per shipping criterion, each with its stated
tolerance and time budget.  These deliberately re-derive expected values from
independent oracles (brute-force DP, exhaustive enumeration, hand counts)
rather than trusting the library's own arithmetic."""

from __future__ import annotations

import itertools
import random
import time

import pytest
from helpers import make_entry, make_record
from test_chunking import random_timeline
from test_crossval import PLANTS, fixture_manifest, fixture_overrides
from test_metrics import as_script, enumerate_minimal_alignments, oracle_distance

from speechforge.annotation import ChunkWork, run_stage1, run_stage2
from speechforge.benchmark import (
    admit_candidates,
    build_package,
    normalize_targets,
)
from speechforge.chunking import (
    apply_cuts,
    complement_silences,
    merge_speech_intervals,
    plan_cuts,
    TimedUtterance,
)
from speechforge.crossval import FILTER_NAMES, CascadeConfig, run_cascade
from speechforge.evaluation import answer_key, evaluate_package
from speechforge.metrics import (
    compute_err,
    compute_pata,
    edit_distance,
    score_tags,
    text_only,
    tokenize,
)
from speechforge.mixing import (
    STAGE_RATIOS,
    InstanceKind,
    build_stage,
    largest_remainder,
)
from speechforge.mocks import (
    MockAnnotator,
    MockMcqGenerator,
    MockModel,
    OracleExpert,
)
from speechforge.review import (
    AdjudicationDecision,
    ReviewDecision,
    ReviewQueue,
    ReviewState,
    Verdict,
    VersionConflictError,
)
from speechforge.schema import ManifestEntry

WINDOW = (300.0, 360.0)
TAGS = ["<Laughter>", "<Crying>", "<Sighing>", "<Breathing>"]


def _random_tagged_text(rng: random.Random, language: str) -> str:
    if language == "en":
        vocab = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"]
        tokens = [rng.choice(vocab) for _ in range(rng.randint(0, 8))]
    else:
        tokens = [rng.choice("我你他今天很好不")
                  for _ in range(rng.randint(0, 8))]
    for _ in range(rng.randint(0, 3)):
        tokens.insert(rng.randint(0, len(tokens)), rng.choice(TAGS))
    return " ".join(tokens)


# ── 1. composite-score formula fidelity ──────────────────────────────────────

def test_accept_01_pata_formula_fidelity():
    """1,000 randomized pairs: the reported score equals
    alpha*max(0, 1-err) + (1-alpha)*f1 recomputed from independently
    obtained components, exactly; alpha defaults to 0.5.  Budget: 5 s."""
    rng = random.Random(20260818)
    started = time.monotonic()
    for _ in range(1000):
        language = rng.choice(["en", "zh"])
        ref = _random_tagged_text(rng, language)
        hyp = _random_tagged_text(rng, language)

        score = compute_pata(ref, hyp, language)

        # components recomputed through the public pieces, not the composite
        err = compute_err(ref, hyp, language)
        ref_tokens = tokenize(ref, language)
        hyp_tokens = tokenize(hyp, language)
        tp, fp, fn, f1 = score_tags(ref_tokens, hyp_tokens)
        distance, _ = edit_distance(text_only(ref_tokens), text_only(hyp_tokens))
        assert err == distance / max(1, len(text_only(ref_tokens)))

        assert score.alpha == 0.5                      # default honored
        assert score.err_text == err
        assert score.f1_para == f1
        assert (score.tag_tp, score.tag_fp, score.tag_fn) == (tp, fp, fn)
        expected = 0.5 * max(0.0, 1.0 - err) + 0.5 * f1
        assert score.pata == expected                  # exact, not approx
    elapsed = time.monotonic() - started
    assert elapsed < 5.0, f"budget exceeded: {elapsed:.2f}s"
    print(f"[acceptance] 01 composite-score formula fidelity: PASS ({elapsed:.2f}s)")


# ── 2. alignment against a brute-force oracle ────────────────────────────────

def test_accept_02_alignment_oracle():
    """Exhaustive sweep over short token sequences plus 10,000 random cases
    (<= 8 tokens, <= 3 tags per side): distances match the DP oracle exactly
    and every alignment is minimal-cost.  Budget: 60 s."""
    started = time.monotonic()

    # exhaustive tier: every pair of sequences of length <= 3 over a small
    # alphabet that includes a tag token; alignment must be one of the
    # enumerated minimal scripts
    symbols = ["a", "b", "<Laughter>"]
    sequences = [
        seq
        for n in range(4)
        for seq in itertools.product(symbols, repeat=n)
    ]
    assert len(sequences) == 40
    token_lists = [tokenize(" ".join(seq), "en") for seq in sequences]
    for ref in token_lists:
        for hyp in token_lists:
            distance, alignment = edit_distance(ref, hyp)
            assert distance == oracle_distance(ref, hyp)
            assert alignment.cost == distance
            assert as_script(alignment) in enumerate_minimal_alignments(ref, hyp)
            assert alignment.apply(ref, hyp) == hyp

    # randomized tier: minimality via the oracle (enumeration is exponential)
    rng = random.Random(4242)
    vocab = ["one", "two", "three", "four", "five"]
    for _ in range(10_000):
        def side():
            tokens = [rng.choice(vocab) for _ in range(rng.randint(0, 5))]
            for _ in range(rng.randint(0, 3)):
                tokens.insert(rng.randint(0, len(tokens)), rng.choice(TAGS))
            return tokenize(" ".join(tokens), "en")

        ref, hyp = side(), side()
        assert len(ref) <= 8 and len(hyp) <= 8
        distance, alignment = edit_distance(ref, hyp)
        assert distance == oracle_distance(ref, hyp)
        assert alignment.cost == distance
        assert alignment.apply(ref, hyp) == hyp

    elapsed = time.monotonic() - started
    assert elapsed < 60.0, f"budget exceeded: {elapsed:.2f}s"
    print(f"[acceptance] 02 alignment oracle: PASS ({elapsed:.2f}s)")


# ── 3. canonical tag-scoring conventions ─────────────────────────────────────

def test_accept_03_tag_scoring_conventions():
    """The three canonical cases reproduce exactly: dropping the only tag
    halves the score, fabricating a tag on a tag-free reference halves the
    score, and a tag-free pair is scored by text alone."""
    # perfect text, reference tag dropped -> f1 0, score 0.5
    dropped = compute_pata("hello there <Laughter>", "hello there", "en")
    assert dropped.err_text == 0.0
    assert dropped.f1_para == 0.0
    assert dropped.pata == 0.5

    # perfect text, tag fabricated against a tag-free reference -> 0.5
    fabricated = compute_pata("fine thanks", "fine thanks <Laughter>", "en")
    assert fabricated.err_text == 0.0
    assert fabricated.f1_para == 0.0
    assert fabricated.pata == 0.5

    # both sides tag-free -> tag F1 is vacuously 1, the text term decides
    text_only_case = compute_pata("one two three", "one two four", "en")
    assert text_only_case.f1_para == 1.0
    assert text_only_case.err_text == pytest.approx(1 / 3)
    assert text_only_case.pata == pytest.approx(5 / 6)
    # and a perfect tag-free pair is a perfect score
    assert compute_pata("we are done", "we are done", "en").pata == 1.0
    print("[acceptance] 03 tag-scoring conventions: PASS")


# ── 4. chunker safety over randomized timelines ──────────────────────────────

def test_accept_04_chunker_safety():
    """10,000 randomized timelines: no non-fallback cut intersects merged
    speech, every non-final non-fallback chunk lands inside the window, and
    the chunks tile [0, total] exactly.  Budget: 30 s."""
    rng = random.Random(11)
    started = time.monotonic()
    wmin, wmax = WINDOW
    for _ in range(10_000):
        speech, total = random_timeline(rng)
        merged = merge_speech_intervals(speech, [])
        silences = complement_silences(speech, total, 0.2)
        plan = plan_cuts(silences, total, WINDOW)

        # exact tiling
        assert plan.chunks[0][0] == 0.0
        assert plan.chunks[-1][1] == total
        for (_, left_end), (right_start, _) in zip(plan.chunks, plan.chunks[1:]):
            assert left_end == right_start

        fallback = set(plan.fallback_cuts)
        for cut in plan.cuts:
            if cut in fallback:
                continue
            for s, e in merged:
                assert not (s < cut < e), (cut, (s, e))

        for start, end in plan.chunks[:-1]:
            if end not in fallback:
                assert wmin <= end - start <= wmax
    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"budget exceeded: {elapsed:.2f}s"
    print(f"[acceptance] 04 chunker safety: PASS ({elapsed:.2f}s)")


# ── 5. cross-validation cascade attribution ──────────────────────────────────

def test_accept_05_cascade_attribution_and_order_independence():
    """Planted violations are rejected with exact per-filter attribution,
    the 0.30 error threshold is inclusive, and permuting filter order never
    changes the survivor set."""
    entries = fixture_manifest()
    expert = OracleExpert(entries, fixture_overrides())
    survivors, stats = run_cascade(entries, expert)

    survivor_ids = {e.record.utterance_id for e in survivors}
    assert survivor_ids == {f"utt-{i:03d}" for i in range(100)} - set(PLANTS)
    assert "utt-060" in survivor_ids          # err == 0.30 exactly: admitted
    assert stats.rejections == {name: 1 for name in FILTER_NAMES}
    for entry in entries:
        uid = entry.record.utterance_id
        failed = {n for n in FILTER_NAMES if not entry.quality[n]["pass"]}
        assert failed == ({PLANTS[uid][0]} if uid in PLANTS else set()), uid

    for permutation in itertools.permutations(FILTER_NAMES):
        fresh = fixture_manifest()
        expert = OracleExpert(fresh, fixture_overrides())
        config = CascadeConfig(filters=permutation, backoff_s=0.0)
        permuted, _ = run_cascade(fresh, expert, config)
        assert {e.record.utterance_id for e in permuted} == survivor_ids
    print("[acceptance] 05 cascade attribution + order independence: PASS")


# ── 6. benchmark admission boundaries ────────────────────────────────────────

def test_accept_06_admission_boundaries():
    """err 0.10 rejected / 0.099 admitted; duration 3.0 s admitted /
    2.99 s rejected."""
    def entry(uid, err, duration):
        return make_entry(
            uid,
            duration_s=duration,
            quality={"transcription_error": {
                "pass": err <= 0.30, "score": err, "detail": "",
            }},
        )

    pool = [
        entry("utt-a", 0.10, 5.0),
        entry("utt-b", 0.099, 5.0),
        entry("utt-c", 0.0, 3.0),
        entry("utt-d", 0.0, 2.99),
    ]
    admitted = {e.record.utterance_id for e in admit_candidates(pool)}
    assert admitted == {"utt-b", "utt-c"}
    print("[acceptance] 06 admission boundaries: PASS")


# ── 7. review state machine ──────────────────────────────────────────────────

def test_accept_07_review_state_machine():
    """All nine verdict pairs reach the mandated terminal state, both
    adjudication outcomes behave, and every stale concurrent submit raises
    a version conflict."""
    A, M, D = Verdict.ACCEPT_UNMODIFIED, Verdict.MODIFY, Verdict.DISCARD

    def decision(reviewer, verdict, uid="utt-001"):
        revision = make_record(uid, emotion="Sad") if verdict is M else None
        return ReviewDecision(reviewer_id=reviewer, verdict=verdict,
                              revision=revision)

    expected_pairs = {
        (A, A): ReviewState.RETAINED,
        (M, M): ReviewState.ADJUDICATION,
    }
    for first, second in itertools.product([A, M, D], repeat=2):
        outcome = expected_pairs.get(
            (first, second),
            ReviewState.DISCARDED if D in (first, second) or M in (first, second)
            else ReviewState.RETAINED,
        )
        uid = "utt-001"
        queue = ReviewQueue()
        item = queue.enqueue(make_record(uid))

        # a competitor reads version 1 before the first review lands
        queue.submit_review(uid, decision("r1", first), expected_version=1)
        with pytest.raises(VersionConflictError):
            queue.submit_review(uid, decision("r3", second), expected_version=1)
        assert item.version == 2 and item.state is ReviewState.ONE_REVIEWED

        queue.submit_review(uid, decision("r2", second), expected_version=2)
        assert item.state is outcome, (first, second)

        if outcome is ReviewState.ADJUDICATION:
            for consistent in (True, False):
                q2 = ReviewQueue()
                q2.enqueue(make_record(uid))
                q2.submit_review(uid, decision("r1", M), 1)
                q2.submit_review(uid, decision("r2", M), 2)
                # stale adjudication submitted against the pre-review version
                with pytest.raises(VersionConflictError):
                    q2.submit_adjudication(
                        uid,
                        AdjudicationDecision("senior", True, make_record(uid)),
                        expected_version=2,
                    )
                final = make_record(uid, emotion="Angry") if consistent else None
                q2.submit_adjudication(
                    uid, AdjudicationDecision("senior", consistent, final),
                    expected_version=3,
                )
                expected_terminal = (ReviewState.RETAINED if consistent
                                     else ReviewState.DISCARDED)
                assert q2.items[uid].state is expected_terminal
                if consistent:
                    assert q2.items[uid].retained_record() is final
    print("[acceptance] 07 review state machine: PASS")


# ── 8. evaluation harness end-to-end on mocks ────────────────────────────────

def test_accept_08_harness_on_mocks():
    """A scripted answer-key mock scores 100% in every cell; a fixed-"A"
    mock scores exactly the key-position count; the average equals the mean
    over present cells to 1e-12; the report renders with "--" for missing
    cells."""
    entries = [make_entry(f"utt-en-{i:03d}", "en", duration_s=6.0) for i in range(6)] \
        + [make_entry(f"utt-zh-{i:03d}", "zh", duration_s=6.0) for i in range(5)]
    targets = normalize_targets({
        "GEN": {"en": 5, "zh": 4}, "EMO": {"en": 4}, "TPT": {"en": 3, "zh": 2},
    })
    package = build_package(entries, targets, MockMcqGenerator(), seed=77, retries=3)
    key = answer_key(package)
    assert len(key) == 13

    # scripted mock: every cell exactly 1.0
    scripted = MockModel(
        answers={iid: chr(ord("A") + row["answer_index"]) for iid, row in key.items()},
        tpt={ref["item_id"]: ref["reference_tagged"]
             for refs in package.tpt_refs.values() for ref in refs},
    )
    run = evaluate_package(package, scripted, backoff_s=0.0)
    cells = run.report.cells
    assert len(cells) == 5
    assert all(cell.value == 1.0 for cell in cells.values())
    assert run.report.avg == pytest.approx(1.0, abs=1e-12)

    # fixed-"A" mock: per-cell correct equals the independently recounted
    # number of items whose key sits at position 0
    fixed = MockModel(fixed="A")
    run_fixed = evaluate_package(package, fixed, backoff_s=0.0)
    checked = 0
    for (dimension, language), cell in run_fixed.report.cells.items():
        if dimension.value == "TPT":
            continue
        stratum = package.items[(dimension, language)]
        expected_correct = sum(1 for item in stratum if item.answer_index == 0)
        assert cell.correct == expected_correct, (dimension, language)
        checked += 1
    assert checked == 3

    present = [cell.value for cell in run_fixed.report.cells.values()]
    assert abs(run_fixed.report.avg - sum(present) / len(present)) < 1e-12

    table = run_fixed.report.render_markdown()
    lines = table.splitlines()
    assert lines[0] == "| Task | ZH | EN |"
    assert "--" in table                       # absent cells render as dashes
    assert any(line.startswith("| **Avg** |") for line in lines)
    print("[acceptance] 08 evaluation harness on mocks: PASS")


# ── 9. curriculum mixture ratios ─────────────────────────────────────────────

def test_accept_09_curriculum_ratios():
    """Every stage realizes its ratio mix within one instance of exact, and
    the published 9M/6M stage-1 split reproduces at 15,000-instance desk
    scale as 9,000/6,000."""
    for stage, ratios in STAGE_RATIOS.items():
        for total in (7, 999, 1000, 15_000):
            counts = largest_remainder(ratios, total)
            assert sum(counts.values()) == total
            for kind, ratio in ratios.items():
                assert abs(counts[kind] - ratio * total) < 1.0, (stage, total)

    assert largest_remainder(STAGE_RATIOS[1], 15_000) == {
        InstanceKind.TYPE_I_MCQ: 9_000,
        InstanceKind.TYPE_II_OPEN_QA: 6_000,
    }

    pool = [make_entry(f"utt-en-{i:03d}", "en") for i in range(40)]
    instances = build_stage(pool, 1, 15_000, seed=3, mcq_client=MockMcqGenerator())
    by_kind = {}
    for instance in instances:
        by_kind[instance.kind] = by_kind.get(instance.kind, 0) + 1
    assert by_kind == {
        InstanceKind.TYPE_I_MCQ: 9_000,
        InstanceKind.TYPE_II_OPEN_QA: 6_000,
    }
    print("[acceptance] 09 curriculum ratios: PASS")


# ── 10. full pipeline smoke test ─────────────────────────────────────────────

def test_accept_10_full_pipeline_smoke(tmp_path):
    """Synthetic 30-minute timeline -> chunk -> mock-annotate -> validate ->
    two-dimension mini-benchmark (>= 20 items + 5 controls) -> evaluate a
    mock model -> render the report.  Deterministic under a fixed seed and
    finishes inside 2 minutes, with no reviewing service involved."""
    started = time.monotonic()

    def build_once(out_dir):
        total = 1800.0
        utterances = [
            TimedUtterance(20.0 * k + 2.0, 20.0 * k + 17.0,
                           text=f"segment {k} spoken words")
            for k in range(89)
        ]
        speech = [(u.start_s, u.end_s) for u in utterances]
        merged = merge_speech_intervals(speech, [])
        silences = complement_silences(merged, total, 0.2)
        plan = plan_cuts(silences, total, WINDOW)
        assert not plan.fallback_cuts
        chunks = apply_cuts(plan, utterances)

        works = [
            ChunkWork.from_chunk(chunk, f"/audio/rec.wav#{i}", f"rec-c{i:03d}")
            for i, chunk in enumerate(chunks)
        ]
        annotator = MockAnnotator()
        stage1, failures, _ = run_stage1(works, annotator, backoff_s=0.0)
        assert failures == []
        outcome = run_stage2(stage1, annotator, 1, backoff_s=0.0)
        assert outcome.failures == []
        assert len(outcome.records) == 89

        entries = [ManifestEntry(record) for record in outcome.records]
        survivors, stats = run_cascade(
            entries, OracleExpert(entries), CascadeConfig(backoff_s=0.0),
        )
        assert stats.errors == 0
        assert len(survivors) == 89

        targets = normalize_targets({
            "GEN": {"en": 12}, "EMO": {"en": 12}, "TPT": {"en": 25},
        })
        package = build_package(
            survivors, targets, MockMcqGenerator(), seed=20260818,
            out_dir=out_dir, control_fraction=0.2, retries=3,
        )
        run = evaluate_package(package, MockModel(fixed="A"), backoff_s=0.0)
        return package, run, run.report.render_markdown()

    package, run, table = build_once(tmp_path / "a")
    assert package.item_count() >= 20
    controls = [ref for refs in package.tpt_refs.values()
                for ref in refs if ref["is_control"]]
    assert len(controls) == 5
    assert len(package.controls) == 5
    cell_names = {(d.value, l.value) for d, l in run.report.cells}
    assert cell_names == {("GEN", "en"), ("EMO", "en"), ("TPT", "en")}
    assert table.splitlines()[0] == "| Task | ZH | EN |"

    # deterministic: a second run writes byte-identical artifacts
    _, _, table_again = build_once(tmp_path / "b")
    assert table_again == table
    first = sorted((tmp_path / "a").rglob("*"))
    second = sorted((tmp_path / "b").rglob("*"))
    assert [p.name for p in first] == [p.name for p in second]
    for left, right in zip(first, second):
        if left.is_file():
            assert left.read_bytes() == right.read_bytes(), left.name

    elapsed = time.monotonic() - started
    assert elapsed < 120.0, f"budget exceeded: {elapsed:.2f}s"
    print(f"[acceptance] 10 full pipeline smoke: PASS ({elapsed:.2f}s)")
