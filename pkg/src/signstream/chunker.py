"""Chunking long captioned videos and sampling training clips.

Videos are tiled into on-disk chunk records: a first chunk of 3n/2 seconds,
interior chunks of exactly 2n, and a final chunk of 3n/2 to 2n seconds. When
the duration does not divide evenly, the final two chunks overlap so that
both stay within [3n/2, 2n]. Each record carries every caption overlapping
its span padded by n seconds on both sides, and its feature payload covers
the same padded span, so clips may begin up to n/2 seconds before the span
and run up to n seconds past it.

Clip sampling targets uniform time coverage of the video interior:

* first chunk:    start = max(0, u), u ~ U[-n/2, len - n/2]
* interior/only:  start = u ~ U[-n/2, len - n/2]  (``only`` chunks: start 0)
* last chunk:     start = min(len - n, u), u ~ U[0, len]
* duration:       n with probability 1 - p_truncate, else U[m, n]

Start positions are relative to the chunk span; negative starts reach into
the left padding. Drawing chunks proportionally to their span length (see
:func:`sample_manifest_clips`) makes the per-second coverage density flat
over [n, duration - n] and keeps each video sampled in proportion to its
duration. All randomness is counter-based: a draw is fully determined by
(seed, video_id, chunk_index, draw_index), so sampling is order-independent.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .captions import Caption, CaptionTrack, TimeSpan, quantize_ms
from .errors import NonPositiveDuration

DEFAULT_WINDOW_S = 34.0
DEFAULT_MIN_CLIP_S = 17.0
DEFAULT_P_TRUNCATE = 0.2

POSITIONS = ("first", "interior", "last", "only")


@dataclass(frozen=True)
class SamplerConfig:
    n_s: float = DEFAULT_WINDOW_S
    m_s: float = DEFAULT_MIN_CLIP_S
    p_truncate: float = DEFAULT_P_TRUNCATE
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.m_s <= self.n_s:
            raise ValueError(f"need 0 < m ({self.m_s}) <= n ({self.n_s})")
        if not 0 <= self.p_truncate <= 1:
            raise ValueError(f"p_truncate {self.p_truncate} outside [0, 1]")


@dataclass(frozen=True)
class ChunkRecord:
    """One on-disk chunk: a span of the video plus padded caption context."""

    video_id: str
    chunk_index: int
    span: TimeSpan
    position: str
    context_captions: tuple[Caption, ...]
    video_duration_s: float
    avg_caption_duration_s: float | None = None
    feature_slice_ref: str | None = None

    def __post_init__(self):
        if self.position not in POSITIONS:
            raise ValueError(f"unknown chunk position {self.position!r}")

    @property
    def length_s(self) -> float:
        return self.span.duration_s

    def padded_span(self, n_s: float) -> TimeSpan:
        """The span the record actually carries data for: span +- n, in-video."""
        return TimeSpan(max(0.0, quantize_ms(self.span.start_s - n_s)),
                        min(self.video_duration_s, quantize_ms(self.span.end_s + n_s)))


@dataclass(frozen=True)
class ClipSpec:
    """A sampled clip within a chunk; ``start_s`` is span-relative."""

    video_id: str
    chunk_index: int
    start_s: float
    duration_s: float

    def abs_span(self, chunk: ChunkRecord) -> TimeSpan:
        start = quantize_ms(chunk.span.start_s + self.start_s)
        return TimeSpan(start, quantize_ms(start + self.duration_s))


def chunk_layout(video_duration_s: float, n_s: float = DEFAULT_WINDOW_S,
                 ) -> list[tuple[TimeSpan, str]]:
    """Tile [0, duration] into chunk spans with their positions.

    Videos shorter than 3n/2 become a single ``only`` chunk. Otherwise the
    layout is [3n/2] + k*[2n] from the left; if the residue after the last
    full tile is under 3n/2, that tile plus the residue (combined length L)
    are replaced by two chunks of length clamp(ceil_ms(L/2), 3n/2, 2n), one
    anchored at each end.
    """
    if video_duration_s <= 0:
        raise NonPositiveDuration(f"video duration {video_duration_s}s")
    d = quantize_ms(video_duration_s)
    first_len = quantize_ms(1.5 * n_s)
    full_len = quantize_ms(2.0 * n_s)
    if d < first_len:
        return [(TimeSpan(0.0, d), "only")]

    spans = [TimeSpan(0.0, first_len)]
    pos = first_len
    while quantize_ms(d - pos) >= full_len:
        spans.append(TimeSpan(pos, quantize_ms(pos + full_len)))
        pos = quantize_ms(pos + full_len)
    residue = quantize_ms(d - pos)
    if residue >= first_len:
        spans.append(TimeSpan(pos, d))
    elif residue > 0:
        if len(spans) > 1:
            # fold the last full tile and the residue into two overlapping chunks
            base = spans.pop().start_s
            combined = quantize_ms(d - base)
            c = min(max(math.ceil(combined / 2 * 1000) / 1000, first_len), full_len)
            spans.append(TimeSpan(base, quantize_ms(base + c)))
            spans.append(TimeSpan(quantize_ms(d - c), d))
        else:
            # duration in (3n/2, 3n): the first chunk and a right-anchored
            # chunk of 3n/2 overlap to cover the whole video
            spans.append(TimeSpan(quantize_ms(d - first_len), d))

    layout: list[tuple[TimeSpan, str]] = []
    for i, span in enumerate(spans):
        if len(spans) == 1:
            kind = "only"
        elif i == 0:
            kind = "first"
        elif i == len(spans) - 1:
            kind = "last"
        else:
            kind = "interior"
        layout.append((span, kind))
    return layout


def build_chunk_records(track: CaptionTrack, cfg: SamplerConfig, video_id: str,
                        feature_ref_pattern: str | None = None,
                        ) -> list[ChunkRecord]:
    """Build chunk records for a captioned video.

    ``feature_ref_pattern`` may contain ``{video_id}`` and ``{chunk_index}``
    and names the per-chunk feature payload file.
    """
    duration = track.video_duration_s
    captions = track.captions
    avg = (sum(c.span.duration_s for c in captions) / len(captions)
           if captions else None)
    records = []
    for i, (span, position) in enumerate(chunk_layout(duration, cfg.n_s)):
        lo = span.start_s - cfg.n_s
        hi = span.end_s + cfg.n_s
        context = tuple(c for c in captions
                        if c.span.end_s > lo and c.span.start_s < hi)
        ref = None
        if feature_ref_pattern is not None:
            ref = feature_ref_pattern.format(video_id=video_id, chunk_index=i)
        records.append(ChunkRecord(
            video_id=video_id, chunk_index=i, span=span, position=position,
            context_captions=context, video_duration_s=duration,
            avg_caption_duration_s=avg, feature_slice_ref=ref))
    return records


def keyed_rng(seed: int, *parts: object) -> np.random.Generator:
    """A generator fully determined by (seed, *parts); order-independent."""
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed)).encode())
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode("utf-8"))
    return np.random.default_rng(int.from_bytes(h.digest(), "little"))


def clip_rng(cfg: SamplerConfig, record: ChunkRecord, draw_index: int,
             ) -> np.random.Generator:
    return keyed_rng(cfg.seed, record.video_id, record.chunk_index, draw_index)


def sample_clip(chunk: ChunkRecord, cfg: SamplerConfig,
                rng: np.random.Generator) -> ClipSpec:
    """Draw one clip from a chunk under the coverage-uniform start rules."""
    n, m = cfg.n_s, cfg.m_s
    length = chunk.length_s
    if chunk.position == "only":
        start = 0.0
    elif chunk.position == "last":
        start = min(length - n, rng.uniform(0.0, length))
        start = max(0.0, start)  # last chunks are >= 3n/2 > n, but stay safe
    else:
        u = rng.uniform(-n / 2.0, length - n / 2.0)
        start = max(0.0, u) if chunk.position == "first" else u

    if rng.random() < cfg.p_truncate:
        duration = rng.uniform(m, n)
    else:
        duration = n

    start = quantize_ms(start)
    abs_start = quantize_ms(chunk.span.start_s + start)
    payload = chunk.padded_span(n)
    abs_end = min(quantize_ms(abs_start + duration), payload.end_s)
    return ClipSpec(video_id=chunk.video_id, chunk_index=chunk.chunk_index,
                    start_s=start, duration_s=quantize_ms(abs_end - abs_start))


def sample_clip_draw(chunk: ChunkRecord, cfg: SamplerConfig,
                     draw_index: int) -> ClipSpec:
    """Deterministic draw ``draw_index`` for a chunk."""
    return sample_clip(chunk, cfg, clip_rng(cfg, chunk, draw_index))


def sample_manifest_clips(records: Sequence[ChunkRecord], cfg: SamplerConfig,
                          count: int, start_index: int = 0,
                          ) -> Iterator[tuple[ChunkRecord, ClipSpec]]:
    """Draw ``count`` clips across chunks, weighted by chunk span length.

    Length weighting keeps every video (and every second within it) sampled
    in proportion to duration. Draw ``i`` is reproducible in isolation.
    """
    if not records:
        return
    lengths = np.array([r.length_s for r in records], dtype=np.float64)
    cumulative = np.cumsum(lengths)
    total = cumulative[-1]
    for i in range(start_index, start_index + count):
        pick = keyed_rng(cfg.seed, "chunk-pick", i).uniform(0.0, total)
        idx = int(np.searchsorted(cumulative, pick, side="right"))
        idx = min(idx, len(records) - 1)
        record = records[idx]
        yield record, sample_clip_draw(record, cfg, i)
