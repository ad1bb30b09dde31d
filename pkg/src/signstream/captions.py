"""Timed caption tracks and window-relative caption classification.

All times are real seconds. File formats quantize to milliseconds, so values
coming from or going to disk pass through :func:`quantize_ms`. Types are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import EmptyInput, NonMonotonicTimes, OverlappingCues

PERCENTILE_POINTS = (0, 10, 50, 90, 100)


def quantize_ms(t: float) -> float:
    """Snap a time to the millisecond grid (canonical float)."""
    return round(t * 1000.0) / 1000.0


@dataclass(frozen=True)
class TimeSpan:
    """A closed interval [start_s, end_s] in seconds."""

    start_s: float
    end_s: float

    def __post_init__(self):
        if not (math.isfinite(self.start_s) and math.isfinite(self.end_s)):
            raise ValueError(f"non-finite span [{self.start_s}, {self.end_s}]")
        if self.start_s < 0:
            raise ValueError(f"negative start {self.start_s}")
        if self.start_s > self.end_s:
            raise ValueError(f"span start {self.start_s} after end {self.end_s}")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def overlaps(self, other: "TimeSpan") -> bool:
        """True if the open interiors intersect."""
        return self.start_s < other.end_s and other.start_s < self.end_s

    def contains(self, other: "TimeSpan") -> bool:
        return self.start_s <= other.start_s and other.end_s <= self.end_s


@dataclass(frozen=True)
class Caption:
    """One timed text span; ``index`` is its ordinal within the track."""

    span: TimeSpan
    text: str
    index: int = 0

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("caption text is empty")

    @property
    def start_s(self) -> float:
        return self.span.start_s

    @property
    def end_s(self) -> float:
        return self.span.end_s


@dataclass(frozen=True)
class CaptionTrack:
    """An ordered, strictly non-overlapping sequence of captions over a video."""

    captions: tuple[Caption, ...]
    video_duration_s: float

    def __post_init__(self):
        if self.video_duration_s < 0 or not math.isfinite(self.video_duration_s):
            raise ValueError(f"bad video duration {self.video_duration_s}")
        prev: Caption | None = None
        for i, cap in enumerate(self.captions):
            if cap.index != i:
                raise ValueError(f"caption {i} has index {cap.index}")
            if cap.span.end_s > self.video_duration_s:
                raise ValueError(
                    f"caption {i} ends at {cap.span.end_s}s, past video end "
                    f"{self.video_duration_s}s")
            if prev is not None:
                if cap.span.start_s < prev.span.start_s:
                    raise NonMonotonicTimes(
                        f"caption {i} starts at {cap.span.start_s}s before "
                        f"caption {i - 1} at {prev.span.start_s}s")
                if cap.span.start_s < prev.span.end_s:
                    raise OverlappingCues(
                        f"caption {i} [{cap.span.start_s}, {cap.span.end_s}] overlaps "
                        f"caption {i - 1} [{prev.span.start_s}, {prev.span.end_s}]")
            prev = cap

    @classmethod
    def build(cls, items: Iterable[tuple[float, float, str]],
              video_duration_s: float | None = None) -> "CaptionTrack":
        """Construct from (start_s, end_s, text) triples, assigning indices.

        Without an explicit duration the track ends at the last caption.
        """
        caps = tuple(
            Caption(TimeSpan(start, end), text, index=i)
            for i, (start, end, text) in enumerate(items))
        if video_duration_s is None:
            video_duration_s = caps[-1].span.end_s if caps else 0.0
        return cls(caps, video_duration_s)

    def __len__(self) -> int:
        return len(self.captions)

    def __iter__(self):
        return iter(self.captions)

    def texts(self) -> list[str]:
        return [c.text for c in self.captions]


@dataclass(frozen=True)
class WindowCaptions:
    """Captions classified relative to a clip window.

    ``curr`` are fully contained in the clip, ``prev`` start within the n
    seconds before it, and ``next`` end within the n seconds after it. A
    caption crossing the clip's left boundary lands in ``prev`` and its end
    time is surfaced as ``left_edge_end_s``.
    """

    prev: tuple[Caption, ...]
    curr: tuple[Caption, ...]
    next: tuple[Caption, ...]
    left_edge_end_s: float | None


def classify_window_captions(track: CaptionTrack | Sequence[Caption],
                             clip: TimeSpan, n_s: float) -> WindowCaptions:
    """Partition a track's captions into prev / curr / next around ``clip``."""
    captions = track.captions if isinstance(track, CaptionTrack) else tuple(track)
    prev: list[Caption] = []
    curr: list[Caption] = []
    nxt: list[Caption] = []
    left_edge: float | None = None
    for cap in captions:
        s, e = cap.span.start_s, cap.span.end_s
        if clip.start_s <= s and e <= clip.end_s:
            curr.append(cap)
        elif clip.start_s - n_s <= s < clip.start_s:
            prev.append(cap)
            if e > clip.start_s:
                # crosses the left boundary; the latest such end wins
                left_edge = e if left_edge is None else max(left_edge, e)
        elif clip.end_s < e <= clip.end_s + n_s:
            nxt.append(cap)
    return WindowCaptions(tuple(prev), tuple(curr), tuple(nxt), left_edge)


@dataclass(frozen=True)
class TrackStats:
    """Summary statistics over a group of caption tracks."""

    n_signers: int
    n_discourses: int
    n_sentences: int
    length_percentiles_chars: tuple[float, ...]
    duration_percentiles_s: tuple[float, ...]
    hours: float

    def __post_init__(self):
        for vec in (self.length_percentiles_chars, self.duration_percentiles_s):
            if any(b < a for a, b in zip(vec, vec[1:])):
                raise ValueError(f"percentile vector not non-decreasing: {vec}")


def nearest_rank_percentiles(values: Sequence[float],
                             points: Sequence[int] = PERCENTILE_POINTS) -> tuple[float, ...]:
    """Nearest-rank percentiles; 0% is the minimum and 100% the maximum."""
    if not values:
        raise EmptyInput("no values to take percentiles of")
    ordered = sorted(values)
    n = len(ordered)
    out = []
    for p in points:
        rank = max(1, math.ceil(p / 100.0 * n))
        out.append(ordered[rank - 1])
    return tuple(out)


@dataclass(frozen=True)
class TrackGroupKey:
    """Identity of one track for grouping: who signed it, which discourse."""

    signer_id: int
    article_id: str = ""


def compute_stats(tracks: Sequence[tuple[TrackGroupKey, CaptionTrack]],
                  ) -> tuple[TrackStats, dict[int, TrackStats]]:
    """Compute overall and per-signer stats over (key, track) pairs.

    Counts are exact; hours is the summed caption duration / 3600.
    """
    if not tracks:
        raise EmptyInput("no tracks")

    def stats_for(pairs: Sequence[tuple[TrackGroupKey, CaptionTrack]]) -> TrackStats:
        lengths = [len(c.text) for _, t in pairs for c in t]
        durations = [c.span.duration_s for _, t in pairs for c in t]
        if not lengths:
            raise EmptyInput("group has no captions")
        return TrackStats(
            n_signers=len({k.signer_id for k, _ in pairs}),
            n_discourses=len({(k.signer_id, k.article_id) for k, _ in pairs}),
            n_sentences=len(lengths),
            length_percentiles_chars=nearest_rank_percentiles(lengths),
            duration_percentiles_s=nearest_rank_percentiles(durations),
            hours=sum(durations) / 3600.0,
        )

    overall = stats_for(tracks)
    by_signer: dict[int, TrackStats] = {}
    for signer in sorted({k.signer_id for k, _ in tracks}):
        group = [(k, t) for k, t in tracks if k.signer_id == signer]
        by_signer[signer] = stats_for(group)
    return overall, by_signer


def group_stats(groups: Mapping[int, Sequence[CaptionTrack]],
                ) -> tuple[TrackStats, dict[int, TrackStats]]:
    """Convenience wrapper over :func:`compute_stats` for signer -> tracks maps."""
    pairs = [
        (TrackGroupKey(signer_id=s, article_id=str(i)), t)
        for s, ts in groups.items()
        for i, t in enumerate(ts)
    ]
    return compute_stats(pairs)
