"""Review workflow tests: verdict-pair resolution, adjudication, optimistic
versioning, reviewer independence (blinding), and event-log replay."""

from __future__ import annotations

import json

import pytest
from helpers import make_record

from speechforge.review import (
    AdjudicationDecision,
    DuplicateItemError,
    DuplicateReviewerError,
    InvalidStateError,
    ReviewDecision,
    ReviewItem,
    ReviewQueue,
    ReviewState,
    Verdict,
    VersionConflictError,
)

A, M, D = Verdict.ACCEPT_UNMODIFIED, Verdict.MODIFY, Verdict.DISCARD


def decision(reviewer, verdict, uid="utt-001"):
    revision = None
    if verdict is M:
        revision = make_record(uid, emotion="Sad")
    return ReviewDecision(reviewer_id=reviewer, verdict=verdict, revision=revision)


def queue_with_item(uid="utt-001", log_path=None):
    queue = ReviewQueue(log_path=log_path)
    item = queue.enqueue(make_record(uid))
    return queue, item


# ── decision validation ──────────────────────────────────────────────────────

def test_decision_revision_required_iff_modify():
    with pytest.raises(ValueError):
        ReviewDecision(reviewer_id="r1", verdict=M, revision=None)
    with pytest.raises(ValueError):
        ReviewDecision(reviewer_id="r1", verdict=A, revision=make_record())
    with pytest.raises(ValueError):
        ReviewDecision(reviewer_id="  ", verdict=A)
    # string verdicts are coerced
    assert ReviewDecision(reviewer_id="r1", verdict="Discard").verdict is D


def test_adjudication_revision_required_iff_consistent():
    with pytest.raises(ValueError):
        AdjudicationDecision(adjudicator_id="s1", consistent=True, final_revision=None)
    with pytest.raises(ValueError):
        AdjudicationDecision(adjudicator_id="s1", consistent=False,
                             final_revision=make_record())
    with pytest.raises(ValueError):
        AdjudicationDecision(adjudicator_id="", consistent=False)


# ── verdict-pair resolution (all 9 combinations) ─────────────────────────────

PAIR_OUTCOMES = [
    (A, A, ReviewState.RETAINED),
    (A, M, ReviewState.DISCARDED),
    (A, D, ReviewState.DISCARDED),
    (M, A, ReviewState.DISCARDED),
    (M, M, ReviewState.ADJUDICATION),
    (M, D, ReviewState.DISCARDED),
    (D, A, ReviewState.DISCARDED),
    (D, M, ReviewState.DISCARDED),
    (D, D, ReviewState.DISCARDED),
]


@pytest.mark.parametrize("first,second,outcome", PAIR_OUTCOMES)
def test_pair_resolution(first, second, outcome):
    queue, item = queue_with_item()
    queue.submit_review("utt-001", decision("r1", first), expected_version=1)
    assert item.state is ReviewState.ONE_REVIEWED
    assert item.version == 2
    queue.submit_review("utt-001", decision("r2", second), expected_version=2)
    assert item.state is outcome
    assert item.version == 3
    # BothReviewed never survives a mutation
    assert item.state is not ReviewState.BOTH_REVIEWED


def test_adjudication_consistent_retains_final_revision():
    queue, item = queue_with_item()
    queue.submit_review("utt-001", decision("r1", M), 1)
    queue.submit_review("utt-001", decision("r2", M), 2)
    final = make_record("utt-001", emotion="Angry")
    queue.submit_adjudication(
        "utt-001", AdjudicationDecision("senior", True, final), expected_version=3,
    )
    assert item.state is ReviewState.RETAINED
    assert item.version == 4
    assert item.retained_record() is final
    retained = queue.export_retained()
    assert len(retained) == 1
    assert retained[0].record.emotion == "Angry"


def test_adjudication_inconsistent_discards():
    queue, item = queue_with_item()
    queue.submit_review("utt-001", decision("r1", M), 1)
    queue.submit_review("utt-001", decision("r2", M), 2)
    queue.submit_adjudication("utt-001", AdjudicationDecision("senior", False), 3)
    assert item.state is ReviewState.DISCARDED
    assert queue.export_retained() == []


def test_retained_without_adjudication_keeps_original():
    queue, item = queue_with_item()
    queue.submit_review("utt-001", decision("r1", A), 1)
    queue.submit_review("utt-001", decision("r2", A), 2)
    assert item.retained_record() is item.record
    entries = queue.export_retained()
    assert entries[0].record.utterance_id == "utt-001"
    assert entries[0].record.emotion == "Happy"


# ── guards ───────────────────────────────────────────────────────────────────

def test_stale_version_is_rejected_without_side_effects():
    queue, item = queue_with_item()
    queue.submit_review("utt-001", decision("r1", A), 1)
    with pytest.raises(VersionConflictError, match="version 2"):
        queue.submit_review("utt-001", decision("r2", A), expected_version=1)
    assert len(item.reviews) == 1
    assert item.version == 2
    # retry with the fresh version succeeds
    queue.submit_review("utt-001", decision("r2", A), expected_version=2)
    assert item.state is ReviewState.RETAINED


def test_stale_version_on_adjudication():
    queue, item = queue_with_item()
    queue.submit_review("utt-001", decision("r1", M), 1)
    queue.submit_review("utt-001", decision("r2", M), 2)
    with pytest.raises(VersionConflictError):
        queue.submit_adjudication("utt-001", AdjudicationDecision("senior", False), 2)
    assert item.state is ReviewState.ADJUDICATION
    assert item.adjudication is None


def test_duplicate_reviewer_rejected():
    queue, item = queue_with_item()
    queue.submit_review("utt-001", decision("r1", A), 1)
    with pytest.raises(DuplicateReviewerError):
        queue.submit_review("utt-001", decision("r1", D), 2)
    assert len(item.reviews) == 1


def test_adjudicator_must_be_distinct_from_both_reviewers():
    queue, item = queue_with_item()
    queue.submit_review("utt-001", decision("r1", M), 1)
    queue.submit_review("utt-001", decision("r2", M), 2)
    for insider in ("r1", "r2"):
        with pytest.raises(DuplicateReviewerError, match="distinct"):
            queue.submit_adjudication(
                "utt-001", AdjudicationDecision(insider, False), 3,
            )
    assert item.state is ReviewState.ADJUDICATION


def test_reviews_closed_after_terminal_state():
    queue, item = queue_with_item()
    queue.submit_review("utt-001", decision("r1", D), 1)
    queue.submit_review("utt-001", decision("r2", A), 2)
    assert item.state is ReviewState.DISCARDED
    with pytest.raises(InvalidStateError):
        queue.submit_review("utt-001", decision("r3", A), 3)


def test_adjudication_requires_adjudication_state():
    queue, item = queue_with_item()
    with pytest.raises(InvalidStateError, match="not Adjudication"):
        queue.submit_adjudication("utt-001", AdjudicationDecision("senior", False), 1)
    queue.submit_review("utt-001", decision("r1", A), 1)
    with pytest.raises(InvalidStateError):
        queue.submit_adjudication("utt-001", AdjudicationDecision("senior", False), 2)


def test_third_review_never_happens():
    queue, item = queue_with_item()
    queue.submit_review("utt-001", decision("r1", M), 1)
    queue.submit_review("utt-001", decision("r2", M), 2)
    # item moved to Adjudication: further plain reviews are closed
    with pytest.raises(InvalidStateError):
        queue.submit_review("utt-001", decision("r3", A), 3)


def test_enqueue_rejects_duplicates_and_unknown_lookup():
    queue, _ = queue_with_item()
    with pytest.raises(DuplicateItemError):
        queue.enqueue(make_record("utt-001"))
    with pytest.raises(KeyError, match="unknown item"):
        queue.submit_review("utt-404", decision("r1", A), 1)


def test_enqueue_accepts_raw_documents():
    from helpers import make_record_doc
    queue = ReviewQueue()
    item = queue.enqueue(make_record_doc("utt-doc"))
    assert item.item_id == "utt-doc"
    assert item.record.utterance_id == "utt-doc"
    custom = queue.enqueue(make_record("utt-base"), item_id="custom-id")
    assert custom.item_id == "custom-id"


# ── blinding ─────────────────────────────────────────────────────────────────

def test_reviewers_cannot_see_each_other_until_both_in():
    queue, item = queue_with_item()
    queue.submit_review("utt-001", decision("r1", M), 1)

    to_r2 = item.to_dict(viewer="r2")
    assert to_r2["reviews"] == []
    assert to_r2["hidden_reviews"] == 1

    to_r1 = item.to_dict(viewer="r1")
    assert [r["reviewer_id"] for r in to_r1["reviews"]] == ["r1"]
    assert to_r1["hidden_reviews"] == 0

    queue.submit_review("utt-001", decision("r2", A), 2)
    after = item.to_dict(viewer="r2")
    assert [r["reviewer_id"] for r in after["reviews"]] == ["r1", "r2"]
    assert after["hidden_reviews"] == 0


def test_unblinded_serialization_without_viewer():
    queue, item = queue_with_item()
    queue.submit_review("utt-001", decision("r1", M), 1)
    doc = item.to_dict()
    assert len(doc["reviews"]) == 1
    assert doc["reviews"][0]["revision"]["emotion"] == "Sad"
    assert doc["state"] == "OneReviewed"
    assert doc["version"] == 2


# ── queues and stats ─────────────────────────────────────────────────────────

def test_review_queue_for_excludes_own_and_closed_items():
    queue = ReviewQueue()
    for uid in ("utt-001", "utt-002", "utt-003"):
        queue.enqueue(make_record(uid))
    queue.submit_review("utt-001", decision("r1", A), 1)
    queue.submit_review("utt-002", decision("r1", A), 1)
    queue.submit_review("utt-002", decision("r2", A), 2)   # closes utt-002

    open_to_r1 = {i.item_id for i in queue.review_queue_for("r1")}
    assert open_to_r1 == {"utt-003"}
    open_to_r2 = {i.item_id for i in queue.review_queue_for("r2")}
    assert open_to_r2 == {"utt-001", "utt-003"}


def test_adjudication_queue_excludes_involved_reviewers():
    queue, _ = queue_with_item()
    queue.submit_review("utt-001", decision("r1", M), 1)
    queue.submit_review("utt-001", decision("r2", M), 2)
    assert [i.item_id for i in queue.adjudication_queue_for("senior")] == ["utt-001"]
    assert queue.adjudication_queue_for("r1") == []
    assert queue.adjudication_queue_for("r2") == []


def test_stats_counts_every_state():
    queue = ReviewQueue()
    for uid in ("utt-001", "utt-002", "utt-003", "utt-004"):
        queue.enqueue(make_record(uid))
    queue.submit_review("utt-001", decision("r1", A), 1)

    queue.submit_review("utt-002", decision("r1", A), 1)
    queue.submit_review("utt-002", decision("r2", A), 2)

    queue.submit_review("utt-003", decision("r1", M), 1)
    queue.submit_review("utt-003", decision("r2", M), 2)

    assert queue.stats() == {
        "Pending": 1, "OneReviewed": 1, "BothReviewed": 0,
        "Adjudication": 1, "Retained": 1, "Discarded": 0,
    }


# ── event log and replay ─────────────────────────────────────────────────────

def full_session(log_path):
    """A queue with one item per interesting terminal/live state."""
    queue = ReviewQueue(log_path=log_path)
    for uid in ("utt-001", "utt-002", "utt-003", "utt-004", "utt-005"):
        queue.enqueue(make_record(uid))
    # retained unmodified
    queue.submit_review("utt-001", decision("r1", A, "utt-001"), 1)
    queue.submit_review("utt-001", decision("r2", A, "utt-001"), 2)
    # discarded by divergence
    queue.submit_review("utt-002", decision("r1", M, "utt-002"), 1)
    queue.submit_review("utt-002", decision("r2", A, "utt-002"), 2)
    # adjudicated to retained with a final revision
    queue.submit_review("utt-003", decision("r1", M, "utt-003"), 1)
    queue.submit_review("utt-003", decision("r2", M, "utt-003"), 2)
    final = make_record("utt-003", emotion="Angry", tone="Serious")
    queue.submit_adjudication("utt-003", AdjudicationDecision("senior", True, final), 3)
    # still open
    queue.submit_review("utt-004", decision("r1", D, "utt-004"), 1)
    return queue


def snapshot(queue):
    return {uid: item.to_dict() for uid, item in sorted(queue.items.items())}


def strip_timestamps(doc):
    return json.loads(json.dumps(doc))   # deep copy; timestamps replay verbatim


def test_event_log_replay_reproduces_state(tmp_path):
    log_path = tmp_path / "review-log.jsonl"
    original = full_session(log_path)
    rebuilt = ReviewQueue(log_path=log_path)

    assert snapshot(rebuilt) == snapshot(original)
    assert rebuilt.stats() == original.stats()
    assert {e.record.utterance_id for e in rebuilt.export_retained()} \
        == {"utt-001", "utt-003"}
    # versions replay exactly
    assert [rebuilt.items[u].version for u in sorted(rebuilt.items)] == [3, 3, 4, 2, 1]


def test_replay_then_continue_appends_consistently(tmp_path):
    log_path = tmp_path / "review-log.jsonl"
    full_session(log_path)

    resumed = ReviewQueue(log_path=log_path)
    resumed.submit_review("utt-004", decision("r2", A, "utt-004"), 2)
    assert resumed.items["utt-004"].state is ReviewState.DISCARDED

    third = ReviewQueue(log_path=log_path)
    assert snapshot(third) == snapshot(resumed)


def test_replayed_guards_still_hold(tmp_path):
    log_path = tmp_path / "review-log.jsonl"
    full_session(log_path)
    rebuilt = ReviewQueue(log_path=log_path)
    with pytest.raises(InvalidStateError):
        rebuilt.submit_review("utt-001", decision("r3", A, "utt-001"), 3)
    with pytest.raises(DuplicateReviewerError):
        rebuilt.submit_review("utt-004", decision("r1", A, "utt-004"), 2)


def test_corrupt_log_reports_line(tmp_path):
    log_path = tmp_path / "review-log.jsonl"
    full_session(log_path)
    with log_path.open("a", encoding="utf-8") as handle:
        handle.write("{not json\n")
    n_lines = sum(1 for _ in log_path.open())
    with pytest.raises(ValueError, match=f"line {n_lines}"):
        ReviewQueue(log_path=log_path)


def test_rejected_mutations_are_not_logged(tmp_path):
    log_path = tmp_path / "review-log.jsonl"
    queue, _ = queue_with_item(log_path=log_path)
    queue.submit_review("utt-001", decision("r1", A), 1)
    before = log_path.read_text(encoding="utf-8")
    with pytest.raises(VersionConflictError):
        queue.submit_review("utt-001", decision("r2", A), 1)
    with pytest.raises(DuplicateReviewerError):
        queue.submit_review("utt-001", decision("r1", D), 2)
    assert log_path.read_text(encoding="utf-8") == before
    rebuilt = ReviewQueue(log_path=log_path)
    assert rebuilt.items["utt-001"].state is ReviewState.ONE_REVIEWED


def test_memory_only_queue_needs_no_log():
    queue, item = queue_with_item(log_path=None)
    queue.submit_review("utt-001", decision("r1", A), 1)
    assert item.version == 2
