"""Chunked-autoregressive inference over long videos via a translator port.

The driver slides a fixed window (default 34 s) over the video. Within each
window the model's timed output is parsed and captions are accepted only if
they sit inside the trusted region: at least ``head_margin`` seconds after
the window start and ``tail_margin`` before its end (the margins relax at
the video's first and last windows). The next window starts ``head_margin``
before the last accepted caption's end, so content near the previous cutoff
is re-presented with enough left context for the model to commit to it.
When nothing is accepted the window advances by ``fallback_stride``. Window
starts strictly increase and a window cap guards against livelock.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .captions import Caption, CaptionTrack, TimeSpan, quantize_ms
from .errors import (ClipTooLong, LivelockGuardTripped, TranslatorFailure)
from .features import FeatureSlice, FeatureTrack, slice_features
from .grammar import (DEFAULT_GRAMMAR, LineDiagnostic, TimestampGrammar,
                      alignment_input, parse_timed_track, render_timed_track,
                      translation_input)

DEFAULT_WINDOW_S = 34.0
DEFAULT_HEAD_MARGIN_S = 4.0
DEFAULT_TAIL_MARGIN_S = 10.0


@runtime_checkable
class TranslatorPort(Protocol):
    """The model boundary: (feature slice, input text) -> output text.

    Implementations must be stateless across calls from the driver's point
    of view; any caching keyed on inputs is fine.
    """

    def translate(self, features: FeatureSlice, input_text: str) -> str:
        ...


@dataclass(frozen=True)
class DriverConfig:
    window_s: float = DEFAULT_WINDOW_S
    head_margin_s: float = DEFAULT_HEAD_MARGIN_S
    tail_margin_s: float = DEFAULT_TAIL_MARGIN_S
    fallback_stride_s: float | None = None  # default: window - head - tail
    context_budget: int = 256
    max_windows: int = 10_000

    def __post_init__(self):
        if self.head_margin_s + self.tail_margin_s >= self.window_s:
            raise ValueError("head + tail margins must leave an acceptance region")
        if self.fallback_stride_s is None:
            object.__setattr__(self, "fallback_stride_s",
                               self.window_s - self.head_margin_s - self.tail_margin_s)
        if self.fallback_stride_s <= 0:
            raise ValueError("fallback stride must be positive")
        if self.max_windows < 1:
            raise ValueError("max_windows must be at least 1")


@dataclass(frozen=True)
class WindowRecord:
    """Everything that happened in one window, for observability."""

    index: int
    span: TimeSpan
    input_text: str
    raw_output: str
    accepted: tuple[Caption, ...]
    rejected: tuple[LineDiagnostic, ...]
    advance_reason: str


@dataclass(frozen=True)
class DecodeTrace:
    windows: tuple[WindowRecord, ...]

    def __post_init__(self):
        starts = [w.span.start_s for w in self.windows]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("window starts must strictly increase")


@dataclass
class _Loop:
    """Shared autoregression mechanics for translation and alignment."""

    features: FeatureTrack
    cfg: DriverConfig
    grammar: TimestampGrammar
    video_duration_s: float = field(init=False)
    accepted: list[Caption] = field(default_factory=list)
    windows: list[WindowRecord] = field(default_factory=list)
    w_start: float = 0.0

    def __post_init__(self):
        self.video_duration_s = self.features.duration_s

    @property
    def w_end(self) -> float:
        return min(quantize_ms(self.w_start + self.cfg.window_s),
                   self.video_duration_s)

    @property
    def is_first(self) -> bool:
        return self.w_start == 0.0

    @property
    def is_final(self) -> bool:
        return self.w_start + self.cfg.window_s >= self.video_duration_s - 1e-9

    def acceptance_region(self) -> tuple[float, float]:
        """Window-relative [lo, hi] where accepted captions must sit."""
        length = self.w_end - self.w_start
        lo = 0.0 if self.is_first else self.cfg.head_margin_s
        hi = length if self.is_final else length - self.cfg.tail_margin_s
        return lo, hi

    def call(self, translator: TranslatorPort, input_text: str) -> str:
        window_slice = slice_features(self.features,
                                      TimeSpan(self.w_start, self.w_end))
        try:
            return translator.translate(window_slice, input_text)
        except Exception as e:
            raise TranslatorFailure(str(e), window_index=len(self.windows),
                                    window_start_s=self.w_start) from e

    def accept(self, raw_output: str) -> tuple[list[Caption], list[LineDiagnostic]]:
        """Parse and keep the leading run of in-region captions."""
        parsed = parse_timed_track(raw_output, self.w_start, self.grammar)
        lo, hi = self.acceptance_region()
        accepted: list[Caption] = []
        rejected = list(parsed.diagnostics)
        last_end = self.accepted[-1].span.end_s if self.accepted else 0.0
        for cap in parsed.captions:
            if cap.span.end_s <= last_end + 1e-9:
                # re-emission of already committed content (the window
                # overlaps the previous cutoff by the head margin): skip
                rejected.append(LineDiagnostic(
                    0, "DuplicateOfCommitted",
                    f"ends at {cap.span.end_s}s, already covered to {last_end}s"))
                continue
            rel_start = cap.span.start_s - self.w_start
            rel_end = cap.span.end_s - self.w_start
            if rel_start < lo - 1e-9 or rel_end > hi + 1e-9:
                rejected.append(LineDiagnostic(
                    0, "OutsideAcceptance",
                    f"[{rel_start:.3f}, {rel_end:.3f}] outside [{lo}, {hi}]"))
                break
            if cap.span.start_s < last_end - 1e-9:
                rejected.append(LineDiagnostic(
                    0, "OverlapsPrior",
                    f"starts at {cap.span.start_s}s before accepted {last_end}s"))
                break
            accepted.append(Caption(cap.span, cap.text,
                                    index=len(self.accepted) + len(accepted)))
            last_end = cap.span.end_s
        return accepted, rejected

    def advance(self, accepted: Sequence[Caption],
                rejected: Sequence[LineDiagnostic]) -> str:
        """Move the window start; returns the reason for the trace."""
        head = self.cfg.head_margin_s
        candidate = None
        reason = "fallback_stride"
        if accepted:
            candidate = quantize_ms(accepted[-1].span.end_s - head)
            reason = "after_accepted"
        if candidate is None or candidate <= self.w_start + 1e-9:
            candidate = quantize_ms(self.w_start + self.cfg.fallback_stride_s)
            reason = "fallback_stride" if not accepted else "fallback_stall"
        self.w_start = candidate
        return reason

    def record(self, input_text: str, raw_output: str,
               accepted: Sequence[Caption], rejected: Sequence[LineDiagnostic],
               reason: str, span: TimeSpan) -> None:
        self.windows.append(WindowRecord(
            index=len(self.windows), span=span, input_text=input_text,
            raw_output=raw_output, accepted=tuple(accepted),
            rejected=tuple(rejected), advance_reason=reason))

    def guard(self) -> None:
        if len(self.windows) >= self.cfg.max_windows:
            raise LivelockGuardTripped(
                f"window cap {self.cfg.max_windows} reached at "
                f"{self.w_start}s of {self.video_duration_s}s",
                trace=DecodeTrace(tuple(self.windows)))

    def track(self) -> CaptionTrack:
        return CaptionTrack(tuple(self.accepted), self.video_duration_s)


def run_timed_translation(features: FeatureTrack, translator: TranslatorPort,
                          cfg: DriverConfig = DriverConfig(),
                          grammar: TimestampGrammar = DEFAULT_GRAMMAR,
                          ) -> tuple[CaptionTrack, DecodeTrace]:
    """Translate a whole video into a timed caption track."""
    loop = _Loop(features, cfg, grammar)
    while True:
        loop.guard()
        span = TimeSpan(loop.w_start, loop.w_end)
        final = loop.is_final
        prior = "\n".join(c.text for c in loop.accepted)
        input_text = translation_input(prior or None, budget=cfg.context_budget,
                                       grammar=grammar)
        raw = loop.call(translator, input_text)
        accepted, rejected = loop.accept(raw)
        loop.accepted.extend(accepted)
        reason = "end_of_video" if final else loop.advance(accepted, rejected)
        loop.record(input_text, raw, accepted, rejected, reason, span)
        if final:
            break
    return loop.track(), DecodeTrace(tuple(loop.windows))


def run_untimed_discourse(features: FeatureTrack, translator: TranslatorPort,
                          cfg: DriverConfig = DriverConfig(),
                          grammar: TimestampGrammar = DEFAULT_GRAMMAR) -> str:
    """Discourse-level untimed translation.

    Runs the timed task internally (window advancement needs timestamps) and
    strips the timing from the result.
    """
    track, _ = run_timed_translation(features, translator, cfg, grammar)
    return " ".join(track.texts())


def run_sentence_level(features: FeatureTrack, clip: TimeSpan,
                       prior_context: str | None, translator: TranslatorPort,
                       cfg: DriverConfig = DriverConfig(),
                       grammar: TimestampGrammar = DEFAULT_GRAMMAR) -> str:
    """One untimed translation call for a single clip."""
    if clip.duration_s > cfg.window_s + 1e-9:
        raise ClipTooLong(f"clip of {clip.duration_s}s exceeds the "
                          f"{cfg.window_s}s window")
    input_text = translation_input(prior_context, budget=cfg.context_budget,
                                   grammar=grammar)
    window_slice = slice_features(features, clip)
    try:
        return translator.translate(window_slice, input_text)
    except Exception as e:
        raise TranslatorFailure(str(e), window_start_s=clip.start_s) from e


@dataclass(frozen=True)
class AlignmentOutcome:
    track: CaptionTrack
    trace: DecodeTrace
    unconsumed_texts: tuple[str, ...]
    decoherence: str | None = None  # diagnostic when the aligner went off-script


def _edit_distance(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1,
                           prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalized_edit_distance(a: str, b: str) -> float:
    if not a and not b:
        return 0.0
    return _edit_distance(a, b) / max(len(a), len(b))


DECOHERENCE_THRESHOLD = 0.5


def run_alignment(features: FeatureTrack, caption_texts: Sequence[str],
                  translator: TranslatorPort,
                  cfg: DriverConfig = DriverConfig(),
                  grammar: TimestampGrammar = DEFAULT_GRAMMAR,
                  ) -> AlignmentOutcome:
    """Align the given caption texts to the video autoregressively.

    Each window presents the remaining unaligned captions (overflow style)
    anchored by the last accepted end time; accepted lines consume captions
    in order and keep the original text with the model's timing. If a
    window's accepted text drifts from the corresponding captions beyond the
    edit-distance threshold, alignment stops with a decoherence diagnostic
    and the partial track is returned.
    """
    loop = _Loop(features, cfg, grammar)
    pending = list(caption_texts)
    decoherence = None
    while pending:
        loop.guard()
        span = TimeSpan(loop.w_start, loop.w_end)
        final = loop.is_final
        left_rel = (loop.accepted[-1].span.end_s - loop.w_start
                    if loop.accepted else 0.0)
        input_text = alignment_input(left_rel, pending,
                                     input_specifies_breaks=True,
                                     grammar=grammar)
        raw = loop.call(translator, input_text)
        accepted, rejected = loop.accept(raw)
        if accepted:
            emitted = " ".join(c.text for c in accepted)
            expected = " ".join(pending[:len(accepted)])
            ned = normalized_edit_distance(emitted, expected)
            if ned > DECOHERENCE_THRESHOLD:
                decoherence = (f"aligner output drifted from input captions "
                               f"(normalized edit distance {ned:.2f}) at window "
                               f"{len(loop.windows)}")
                loop.record(input_text, raw, (), rejected,
                            "decoherence_stop", span)
                break
            # keep the original caption text with the model's timing
            for cap in accepted:
                text = pending.pop(0)
                loop.accepted.append(Caption(cap.span, text,
                                             index=len(loop.accepted)))
        reason = "end_of_video" if final else loop.advance(accepted, rejected)
        loop.record(input_text, raw, accepted, rejected, reason, span)
        if final:
            break
    return AlignmentOutcome(track=loop.track(),
                            trace=DecodeTrace(tuple(loop.windows)),
                            unconsumed_texts=tuple(pending),
                            decoherence=decoherence)


# -- mock translators ---------------------------------------------------------


class OracleTranslator:
    """Emits the reference captions fully inside the presented window,
    correctly formatted; the ideal model for end-to-end tests."""

    def __init__(self, reference: CaptionTrack,
                 grammar: TimestampGrammar = DEFAULT_GRAMMAR):
        self.reference = reference
        self.grammar = grammar

    def translate(self, features: FeatureSlice, input_text: str) -> str:
        lo, hi = features.start_s, features.end_s
        visible = [c for c in self.reference
                   if c.span.start_s >= lo and c.span.end_s <= hi]
        return render_timed_track(visible, lo, self.grammar)


class JitterOracle(OracleTranslator):
    """Oracle over a timestamp-jittered copy of the reference track.

    Jitter is a centered Gaussian truncated at two sigma, applied once at
    construction; sigma 0 reproduces the plain oracle.
    """

    def __init__(self, reference: CaptionTrack, sigma_s: float, seed: int = 0,
                 grammar: TimestampGrammar = DEFAULT_GRAMMAR):
        super().__init__(jitter_track(reference, sigma_s, seed), grammar)


def jitter_track(track: CaptionTrack, sigma_s: float, seed: int = 0) -> CaptionTrack:
    """Perturb caption boundaries by truncated Gaussian noise, keeping the
    track valid (ordered, non-overlapping, inside the video)."""
    if sigma_s == 0.0:
        return track
    rng = np.random.default_rng(seed)
    items: list[tuple[float, float, str]] = []
    floor = 0.0
    for cap in track:
        def draw() -> float:
            return float(np.clip(rng.normal(0.0, sigma_s), -2 * sigma_s, 2 * sigma_s))

        start = quantize_ms(cap.span.start_s + draw())
        end = quantize_ms(cap.span.end_s + draw())
        start = min(max(start, floor), track.video_duration_s)
        end = min(max(end, start), track.video_duration_s)
        items.append((start, end, cap.text))
        floor = end
    return CaptionTrack.build(items, track.video_duration_s)


class EmptyTranslator:
    """Always returns an empty string; the driver advances by fallback."""

    def translate(self, features: FeatureSlice, input_text: str) -> str:
        return ""


class StutterTranslator:
    """Repeats its previous output forever; a livelock probe."""

    def __init__(self, line: str = "<|0.0|><|2.0|> again"):
        self.last = line

    def translate(self, features: FeatureSlice, input_text: str) -> str:
        return self.last
