"""Human-verification workflow: two independent reviews per item, divergence
discard, senior-adjudicator consistency check.

State machine:

    Pending -> OneReviewed -> BothReviewed (transient) -> Retained
                                                       -> Discarded
                                                       -> Adjudication -> Retained
                                                                       -> Discarded

Resolution after the second review: both AcceptUnmodified retains the
original record; any Discard verdict discards; exactly one Modify (the
judgments diverge) discards; both Modify escalates to adjudication, where a
distinct senior adjudicator either confirms the corrections align (retained,
with the adjudicator-selected final revision) or not (discarded).

Mutations are optimistic-over-version (compare-and-set) and appended to an
on-disk event log; restarting replays the log to rebuild identical state.
Reviewers never see each other's decisions until both reviews are in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from threading import RLock

from .schema import AnnotationRecord, ManifestEntry, emit_record, validate_record
from .vocab import DEFAULT_TAG_VOCABULARY


class VersionConflictError(RuntimeError):
    """Stale expected_version — somebody else mutated the item first."""


class DuplicateReviewerError(ValueError):
    """A reviewer/adjudicator already touched this item."""


class InvalidStateError(RuntimeError):
    """The operation is not legal in the item's current state."""


class DuplicateItemError(ValueError):
    """enqueue() got an item_id that is already queued."""


class ReviewState(str, Enum):
    PENDING = "Pending"
    ONE_REVIEWED = "OneReviewed"
    BOTH_REVIEWED = "BothReviewed"   # transient: resolved within the same mutation
    ADJUDICATION = "Adjudication"
    RETAINED = "Retained"
    DISCARDED = "Discarded"


TERMINAL_STATES = (ReviewState.RETAINED, ReviewState.DISCARDED)


class Verdict(str, Enum):
    ACCEPT_UNMODIFIED = "AcceptUnmodified"
    MODIFY = "Modify"
    DISCARD = "Discard"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class ReviewDecision:
    reviewer_id: str
    verdict: Verdict
    revision: AnnotationRecord | None = None
    timestamp: str = field(default_factory=_now)

    def __post_init__(self):
        self.verdict = Verdict(self.verdict)
        if (self.verdict is Verdict.MODIFY) != (self.revision is not None):
            raise ValueError("revision is required iff the verdict is Modify")
        if not str(self.reviewer_id).strip():
            raise ValueError("reviewer_id must be non-empty")

    def to_dict(self) -> dict:
        return {
            "reviewer_id": self.reviewer_id,
            "verdict": self.verdict.value,
            "revision": emit_record(self.revision) if self.revision else None,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, doc: dict, vocabulary=DEFAULT_TAG_VOCABULARY) -> "ReviewDecision":
        revision = doc.get("revision")
        return cls(
            reviewer_id=doc["reviewer_id"],
            verdict=Verdict(doc["verdict"]),
            revision=validate_record(revision, vocabulary) if revision else None,
            timestamp=doc.get("timestamp") or _now(),
        )


@dataclass
class AdjudicationDecision:
    adjudicator_id: str
    consistent: bool
    final_revision: AnnotationRecord | None = None
    timestamp: str = field(default_factory=_now)

    def __post_init__(self):
        if bool(self.consistent) != (self.final_revision is not None):
            raise ValueError("final_revision is required iff consistent")
        if not str(self.adjudicator_id).strip():
            raise ValueError("adjudicator_id must be non-empty")

    def to_dict(self) -> dict:
        return {
            "adjudicator_id": self.adjudicator_id,
            "consistent": bool(self.consistent),
            "final_revision": emit_record(self.final_revision) if self.final_revision else None,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, doc: dict, vocabulary=DEFAULT_TAG_VOCABULARY) -> "AdjudicationDecision":
        revision = doc.get("final_revision")
        return cls(
            adjudicator_id=doc["adjudicator_id"],
            consistent=bool(doc["consistent"]),
            final_revision=validate_record(revision, vocabulary) if revision else None,
            timestamp=doc.get("timestamp") or _now(),
        )


@dataclass
class ReviewItem:
    item_id: str
    record: AnnotationRecord
    state: ReviewState = ReviewState.PENDING
    reviews: list[ReviewDecision] = field(default_factory=list)
    adjudication: AdjudicationDecision | None = None
    version: int = 1

    def retained_record(self) -> AnnotationRecord:
        if self.adjudication is not None and self.adjudication.consistent:
            return self.adjudication.final_revision
        return self.record

    def reviewer_ids(self) -> set[str]:
        return {r.reviewer_id for r in self.reviews}

    def to_dict(self, viewer: str | None = None) -> dict:
        """Serialize; while reviews are still open, a viewer sees only their
        own decision (independence blinding)."""
        reviews = self.reviews
        hidden = 0
        if viewer is not None and self.state in (ReviewState.PENDING, ReviewState.ONE_REVIEWED):
            visible = [r for r in reviews if r.reviewer_id == viewer]
            hidden = len(reviews) - len(visible)
            reviews = visible
        return {
            "item_id": self.item_id,
            "state": self.state.value,
            "version": self.version,
            "record": emit_record(self.record),
            "reviews": [r.to_dict() for r in reviews],
            "hidden_reviews": hidden,
            "adjudication": self.adjudication.to_dict() if self.adjudication else None,
        }


def _resolve_pair(first: Verdict, second: Verdict) -> ReviewState:
    verdicts = (first, second)
    if Verdict.DISCARD in verdicts:
        return ReviewState.DISCARDED
    modifies = sum(1 for v in verdicts if v is Verdict.MODIFY)
    if modifies == 0:
        return ReviewState.RETAINED
    if modifies == 1:
        return ReviewState.DISCARDED
    return ReviewState.ADJUDICATION


class ReviewQueue:
    """Materialized review state over an append-only event log.

    With a log_path, every accepted mutation is appended as one JSON line and
    a restart (constructing a new queue on the same path) replays the log
    through the normal code paths, reproducing identical state.
    """

    def __init__(self, log_path=None, vocabulary=DEFAULT_TAG_VOCABULARY):
        self.items: dict[str, ReviewItem] = {}
        self.vocabulary = vocabulary
        self._lock = RLock()
        self._log_path = Path(log_path) if log_path else None
        self._replaying = False
        if self._log_path is not None and self._log_path.exists():
            self._replay()

    # ── event log ────────────────────────────────────────────────────────────

    def _append(self, event: dict) -> None:
        if self._replaying or self._log_path is None:
            return
        self._log_path.parent.mkdir(parents=True, exist_ok=True)
        with self._log_path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n")

    def _replay(self) -> None:
        self._replaying = True
        try:
            with self._log_path.open("r", encoding="utf-8") as handle:
                for line_no, line in enumerate(handle, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        event = json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise ValueError(
                            f"{self._log_path} line {line_no}: corrupt event log"
                        ) from exc
                    self._apply(event)
        finally:
            self._replaying = False

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "enqueue":
            self.enqueue(event["record"], item_id=event["item_id"])
        elif kind == "review":
            self.submit_review(
                event["item_id"],
                ReviewDecision.from_dict(event["decision"], self.vocabulary),
                event["expected_version"],
            )
        elif kind == "adjudicate":
            self.submit_adjudication(
                event["item_id"],
                AdjudicationDecision.from_dict(event["decision"], self.vocabulary),
                event["expected_version"],
            )
        else:
            raise ValueError(f"unknown event type {kind!r}")

    # ── operations ───────────────────────────────────────────────────────────

    def enqueue(self, record, item_id: str | None = None) -> ReviewItem:
        with self._lock:
            if not isinstance(record, AnnotationRecord):
                record = validate_record(record, self.vocabulary)
            item_id = item_id or record.utterance_id
            if item_id in self.items:
                raise DuplicateItemError(f"item {item_id!r} already queued")
            item = ReviewItem(item_id=item_id, record=record)
            self.items[item_id] = item
            self._append({"type": "enqueue", "item_id": item_id, "record": emit_record(record)})
            return item

    def _get(self, item_id: str) -> ReviewItem:
        try:
            return self.items[item_id]
        except KeyError:
            raise KeyError(f"unknown item {item_id!r}") from None

    def submit_review(self, item_id: str, decision: ReviewDecision,
                      expected_version: int) -> ReviewItem:
        with self._lock:
            item = self._get(item_id)
            if item.state not in (ReviewState.PENDING, ReviewState.ONE_REVIEWED):
                raise InvalidStateError(
                    f"item {item_id!r} is {item.state.value}; reviews are closed"
                )
            if expected_version != item.version:
                raise VersionConflictError(
                    f"item {item_id!r} is at version {item.version}, "
                    f"submit expected {expected_version}"
                )
            if decision.reviewer_id in item.reviewer_ids():
                raise DuplicateReviewerError(
                    f"reviewer {decision.reviewer_id!r} already reviewed {item_id!r}"
                )
            item.reviews.append(decision)
            if len(item.reviews) == 1:
                item.state = ReviewState.ONE_REVIEWED
            else:
                # transient BothReviewed resolves within this mutation
                item.state = ReviewState.BOTH_REVIEWED
                item.state = _resolve_pair(item.reviews[0].verdict, item.reviews[1].verdict)
            item.version += 1
            self._append({
                "type": "review",
                "item_id": item_id,
                "decision": decision.to_dict(),
                "expected_version": expected_version,
            })
            return item

    def submit_adjudication(self, item_id: str, decision: AdjudicationDecision,
                            expected_version: int) -> ReviewItem:
        with self._lock:
            item = self._get(item_id)
            if item.state is not ReviewState.ADJUDICATION:
                raise InvalidStateError(
                    f"item {item_id!r} is {item.state.value}, not Adjudication"
                )
            if expected_version != item.version:
                raise VersionConflictError(
                    f"item {item_id!r} is at version {item.version}, "
                    f"submit expected {expected_version}"
                )
            if decision.adjudicator_id in item.reviewer_ids():
                raise DuplicateReviewerError(
                    f"adjudicator {decision.adjudicator_id!r} reviewed "
                    f"{item_id!r}; a distinct senior expert is required"
                )
            item.adjudication = decision
            item.state = ReviewState.RETAINED if decision.consistent else ReviewState.DISCARDED
            item.version += 1
            self._append({
                "type": "adjudicate",
                "item_id": item_id,
                "decision": decision.to_dict(),
                "expected_version": expected_version,
            })
            return item

    # ── queries ──────────────────────────────────────────────────────────────

    def review_queue_for(self, reviewer_id: str) -> list[ReviewItem]:
        """Items the reviewer can still review (open, not yet theirs)."""
        with self._lock:
            return [
                item for item in self.items.values()
                if item.state in (ReviewState.PENDING, ReviewState.ONE_REVIEWED)
                and reviewer_id not in item.reviewer_ids()
            ]

    def adjudication_queue_for(self, adjudicator_id: str) -> list[ReviewItem]:
        """Items awaiting a senior adjudicator distinct from both reviewers."""
        with self._lock:
            return [
                item for item in self.items.values()
                if item.state is ReviewState.ADJUDICATION
                and adjudicator_id not in item.reviewer_ids()
            ]

    def export_retained(self) -> list[ManifestEntry]:
        """Exactly the Retained items, final revision substituted where the
        adjudicator supplied one."""
        with self._lock:
            return [
                ManifestEntry(item.retained_record())
                for item in self.items.values()
                if item.state is ReviewState.RETAINED
            ]

    def stats(self) -> dict:
        with self._lock:
            counts = {state.value: 0 for state in ReviewState}
            for item in self.items.values():
                counts[item.state.value] += 1
            return counts
