"""Silence-driven safe chunking of long recordings.

Two upstream detectors supply utterance timelines; their union defines
speech, the complement defines candidate silences, and cuts are planned
greedily at silence midpoints inside a target window (default 300-360 s)
so that no cut ever lands mid-utterance.  Times are 64-bit seconds and the
arithmetic is exact comparisons on detector timestamps.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum


class NegativeOrInvertedError(ValueError):
    """Interval with start < 0 or end <= start."""


class EmptyTimelineError(ValueError):
    """Planning requested for a non-positive total duration."""


class StraddlingUtteranceError(ValueError):
    """An utterance crosses a cut — the plan violates the safety invariant."""


class DetectorSource(str, Enum):
    A = "DetectorA"
    B = "DetectorB"


@dataclass(frozen=True)
class TimedUtterance:
    start_s: float
    end_s: float
    source: DetectorSource = DetectorSource.A
    text: str | None = None
    speaker_id: str | None = None

    def __post_init__(self):
        if self.start_s < 0 or self.end_s <= self.start_s:
            raise NegativeOrInvertedError(
                f"bad utterance interval ({self.start_s}, {self.end_s})"
            )


@dataclass(frozen=True)
class SilenceRegion:
    start_s: float
    end_s: float

    def __post_init__(self):
        if self.start_s < 0 or self.end_s <= self.start_s:
            raise NegativeOrInvertedError(
                f"bad silence interval ({self.start_s}, {self.end_s})"
            )

    @property
    def midpoint(self) -> float:
        return (self.start_s + self.end_s) / 2.0

    @property
    def length(self) -> float:
        return self.end_s - self.start_s


@dataclass
class ChunkPlan:
    cuts: list[float]
    chunks: list[tuple[float, float]]
    fallback_cuts: list[float]

    def to_dict(self) -> dict:
        return {
            "cuts": list(self.cuts),
            "chunks": [list(c) for c in self.chunks],
            "fallback_cuts": list(self.fallback_cuts),
        }


@dataclass
class Chunk:
    """One planned chunk together with the utterances that fall inside it."""

    start_s: float
    end_s: float
    utterances: list = field(default_factory=list)

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


def _bounds(interval) -> tuple[float, float]:
    if hasattr(interval, "start_s"):
        start, end = interval.start_s, interval.end_s
    else:
        start, end = interval
    if start < 0 or end <= start:
        raise NegativeOrInvertedError(f"bad interval ({start}, {end})")
    return float(start), float(end)


def merge_speech_intervals(a: list, b: list) -> list[tuple[float, float]]:
    """Union of both detectors' intervals, coalesced into maximal disjoint
    intervals, sorted.  Accepts TimedUtterances or plain (start, end) pairs;
    either list may be empty."""
    spans = sorted(_bounds(u) for u in list(a) + list(b))
    merged: list[tuple[float, float]] = []
    for start, end in spans:
        if merged and start <= merged[-1][1]:
            if end > merged[-1][1]:
                merged[-1] = (merged[-1][0], end)
        else:
            merged.append((start, end))
    return merged


def complement_silences(
    speech: list[tuple[float, float]],
    total_duration_s: float,
    min_silence_s: float = 0.2,
) -> list[SilenceRegion]:
    """Exact set-complement of the merged speech within [0, total], dropping
    gaps shorter than min_silence_s (sub-200 ms gaps are typically
    intra-sentence pauses, not cut sites)."""
    if min_silence_s <= 0:
        raise ValueError("min_silence_s must be positive")
    prev_end = 0.0
    silences: list[SilenceRegion] = []
    for interval in speech:
        start, end = _bounds(interval)
        if start < prev_end:
            raise ValueError("speech intervals must be disjoint and sorted")
        if end > total_duration_s:
            raise ValueError("speech interval exceeds total duration")
        if start - prev_end >= min_silence_s:
            silences.append(SilenceRegion(prev_end, start))
        prev_end = end
    if total_duration_s - prev_end >= min_silence_s:
        silences.append(SilenceRegion(prev_end, total_duration_s))
    return silences


def plan_cuts(
    silences: list[SilenceRegion],
    total_duration_s: float,
    window: tuple[float, float] = (300.0, 360.0),
) -> ChunkPlan:
    """Greedy left-to-right cut planning at silence midpoints.

    From the previous cut c, candidate silences are those whose midpoint
    lies in [c+min, c+max]; the cut lands at the midpoint of the longest
    such region (ties -> earliest).  When the window holds no midpoint the
    fallback searches forward to the first silence midpoint after c+max
    (bounded by c+2*max), then to the largest silence overlapping
    (c+min, c+2*max), flagging the cut either way; a fallback cut is taken
    only if at least window-min of timeline remains after it — otherwise
    the remainder becomes one final, window-violating chunk (utterance
    integrity outranks the window).  A final remainder shorter than max
    is never cut.
    """
    if total_duration_s <= 0:
        raise EmptyTimelineError(f"total_duration_s={total_duration_s}")
    wmin, wmax = float(window[0]), float(window[1])
    if not 0 < wmin < wmax:
        raise ValueError(f"bad window {window}")
    for earlier, later in zip(silences, silences[1:]):
        if later.start_s < earlier.end_s:
            raise ValueError("silences must be sorted and disjoint")

    cuts: list[float] = []
    fallback: list[float] = []
    c = 0.0
    while total_duration_s - c >= wmax:
        in_window = [s for s in silences if c + wmin <= s.midpoint <= c + wmax]
        if in_window:
            best = min(in_window, key=lambda s: (-s.length, s.start_s))
            cut = best.midpoint
        else:
            cut = _fallback_cut(silences, c, wmin, wmax, total_duration_s)
            if cut is None:
                break
            fallback.append(cut)
        cuts.append(cut)
        c = cut

    bounds = [0.0] + cuts + [total_duration_s]
    chunks = list(zip(bounds[:-1], bounds[1:]))
    return ChunkPlan(cuts=cuts, chunks=chunks, fallback_cuts=fallback)


def _fallback_cut(silences, c, wmin, wmax, total) -> float | None:
    def usable(q: float) -> bool:
        return total - q >= wmin

    # first silence midpoint beyond the window, within one extra window span
    ahead = [s.midpoint for s in silences if c + wmax < s.midpoint < c + 2 * wmax]
    for q in sorted(ahead):
        if usable(q):
            return q
    # largest silence overlapping the extended span, cut mid-overlap
    lo, hi = c + wmin, c + 2 * wmax
    overlaps = []
    for s in silences:
        o_start, o_end = max(s.start_s, lo), min(s.end_s, hi)
        if o_end > o_start:
            overlaps.append((o_end - o_start, o_start, o_end))
    for length, o_start, o_end in sorted(overlaps, key=lambda t: (-t[0], t[1])):
        q = (o_start + o_end) / 2.0
        if q > c and usable(q):
            return q
    return None


def apply_cuts(plan: ChunkPlan, utterances: list) -> list[Chunk]:
    """Assign every utterance of the merged timeline to exactly one chunk.

    Raises StraddlingUtteranceError if any utterance crosses a cut (cannot
    happen for non-fallback cuts, which sit strictly inside silences).
    """
    chunks = [Chunk(start, end) for start, end in plan.chunks]
    starts = [ch.start_s for ch in chunks]
    for utt in utterances:
        start, end = _bounds(utt)
        idx = bisect_right(starts, start) - 1
        if idx < 0 or end > chunks[idx].end_s:
            raise StraddlingUtteranceError(
                f"utterance ({start}, {end}) not contained in any chunk"
            )
        chunks[idx].utterances.append(utt)
    return chunks
