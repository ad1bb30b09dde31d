"""Opaque per-frame feature tracks and their on-disk binary format.

A feature file is a 16-byte header (magic ``SGFT``, fps as float32, feature
dim and frame count as uint32, all little-endian) followed by frame-major
float32 data. Frame semantics are deliberately opaque; this library never
interprets feature values.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .captions import TimeSpan, quantize_ms
from .errors import DataError, SpanOutOfRange

MAGIC = b"SGFT"
DEFAULT_FPS = 15.0
_HEADER = struct.Struct("<4sfII")


@dataclass(frozen=True, eq=False)
class FeatureTrack:
    """All frames of one video: shape (count, dim) float32 at ``fps``."""

    fps: float
    frames: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.frames.ndim != 2:
            raise ValueError(f"frames must be 2-D (count, dim), got {self.frames.shape}")
        arr = np.ascontiguousarray(self.frames, dtype=np.float32)
        object.__setattr__(self, "frames", arr)
        arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def duration_s(self) -> float:
        return quantize_ms(self.frame_count / self.fps)

    def check_duration(self, video_duration_s: float) -> None:
        """Verify frame count matches the video duration within one frame."""
        expected = video_duration_s * self.fps
        if abs(self.frame_count - expected) > 1.0 + 1e-6:
            raise DataError(
                f"feature track has {self.frame_count} frames but "
                f"{video_duration_s}s at {self.fps} fps implies {expected:.1f}")


@dataclass(frozen=True, eq=False)
class FeatureSlice:
    """A contiguous run of frames; ``start_frame`` is absolute in the video."""

    fps: float
    start_frame: int
    frames: np.ndarray = field(repr=False)

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def start_s(self) -> float:
        return quantize_ms(self.start_frame / self.fps)

    @property
    def end_s(self) -> float:
        return quantize_ms((self.start_frame + self.frame_count) / self.fps)

    @property
    def span(self) -> TimeSpan:
        return TimeSpan(self.start_s, self.end_s)


def frame_index(t: float, fps: float) -> int:
    """Floor frame index of time ``t``, robust to millisecond-grid floats."""
    return int(math.floor(t * fps + 1e-9))


def slice_features(track: FeatureTrack | FeatureSlice, span: TimeSpan) -> FeatureSlice:
    """Frames with index in [floor(start * fps), floor(end * fps)).

    ``span`` is absolute video time even when slicing from another slice.
    """
    fps = track.fps
    base = track.start_frame if isinstance(track, FeatureSlice) else 0
    count = track.frame_count
    lo = frame_index(span.start_s, fps) - base
    hi = frame_index(span.end_s, fps) - base
    if lo < 0 or hi > count:
        raise SpanOutOfRange(
            f"span [{span.start_s}, {span.end_s}]s maps to frames "
            f"[{lo + base}, {hi + base}) outside [{base}, {base + count})")
    return FeatureSlice(fps=fps, start_frame=base + lo, frames=track.frames[lo:hi])


def write_feature_track(track: FeatureTrack) -> bytes:
    header = _HEADER.pack(MAGIC, float(track.fps), track.dim, track.frame_count)
    return header + track.frames.astype("<f4", copy=False).tobytes()


def read_feature_track(data: bytes) -> FeatureTrack:
    if len(data) < _HEADER.size:
        raise DataError(f"feature file too short ({len(data)} bytes)")
    magic, fps, dim, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"bad feature file magic {magic!r}")
    expected = _HEADER.size + 4 * dim * count
    if len(data) != expected:
        raise DataError(
            f"feature file is {len(data)} bytes, header implies {expected}")
    frames = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(count, dim)
    return FeatureTrack(fps=fps, frames=frames)


def synth_feature_track(duration_s: float, fps: float = DEFAULT_FPS,
                        dim: int = 8, seed: int = 0) -> FeatureTrack:
    """Deterministic synthetic features for fixtures and tests."""
    count = int(round(duration_s * fps))
    rng = np.random.default_rng(seed)
    return FeatureTrack(fps=fps, frames=rng.standard_normal((count, dim)).astype(np.float32))
