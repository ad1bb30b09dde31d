"""The bidirectional control-token grammar for the multitask mixture.

Control tokens are plain text. Task tags are ``<|align|>`` and
``<|translate|>``; conditioning tokens are ``<|avgdur:ss.s|>`` (mean caption
duration across the source video) and ``<|left:ss.s|>`` (end of the caption
crossing the clip's left boundary, the anchor the model predicts from).
Timestamps are clip-relative ``<|ss.s|>`` pairs at a 0.1 s quantum, so a
timed caption line reads ``<|2.0|><|5.5|> text``.

Rendering is strict; parsing is tolerant of arbitrary model output and
reports per-line diagnostics instead of failing the whole parse.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .captions import (Caption, CaptionTrack, TimeSpan, classify_window_captions,
                       quantize_ms)
from .chunker import ChunkRecord, ClipSpec
from .errors import CaptionOutsideWindow, EmptyClip
from .features import FeatureSlice

TASK_ALIGN = "<|align|>"
TASK_TRANSLATE = "<|translate|>"
TIMED_MARKER = "<|timed|>"  # requests timestamped output; absent = plain text
NEXT_CONTEXT = "<|next|>"

DEFAULT_CONTEXT_BUDGET = 256

# mixture weights for the task sampler
P_ALIGNMENT = 0.04
P_INPUT_SPECIFIES_BREAKS = 0.5
P_ALIGN_DURATION_COND = 0.5
P_SPAN_OVERFLOW = 0.8
P_TIMED = 0.8
P_TRANSLATE_DURATION_COND = 0.5
CONTEXT_WEIGHTS = (("none", 0.2), ("prev", 0.64), ("prev_and_next", 0.16))

_LINE_RE = re.compile(r"^<\|(-?\d+(?:\.\d+)?)\|><\|(-?\d+(?:\.\d+)?)\|>\s(.*\S.*)$")
_COND_RE = re.compile(r"^<\|(avgdur|left):(-?\d+(?:\.\d+)?)\|>$")


@dataclass(frozen=True)
class TimestampGrammar:
    """Clip-relative timestamp rendering rules."""

    quantum_s: float = 0.1
    max_s: float = 34.0

    def __post_init__(self):
        if self.quantum_s <= 0:
            raise ValueError(f"quantum must be positive, got {self.quantum_s}")

    @property
    def decimals(self) -> int:
        return max(0, -int(np.floor(np.log10(self.quantum_s) + 1e-9)))

    def quantize(self, t: float) -> float:
        steps = round(t / self.quantum_s)
        return round(steps * self.quantum_s, max(self.decimals, 3))

    def stamp(self, t: float) -> str:
        return f"<|{self.quantize(t):.{self.decimals}f}|>"

    def conditioning(self, kind: str, t: float) -> str:
        return f"<|{kind}:{self.quantize(t):.{self.decimals}f}|>"


DEFAULT_GRAMMAR = TimestampGrammar()


@dataclass(frozen=True)
class TaskDescriptor:
    """One sampled task configuration from the mixture.

    ``branch`` is ``alignment`` or ``translation``. Alignment options:
    ``input_specifies_breaks``, ``duration_conditioning`` (only when the
    model predicts breaks) and ``span_overflow`` (False means a random
    prefix subset). Translation options: ``timed``, ``duration_conditioning``
    (timed only) and ``context`` in {none, prev, prev_and_next}.
    """

    branch: str
    input_specifies_breaks: bool = False
    duration_conditioning: bool = False
    span_overflow: bool = True
    timed: bool = True
    context: str = "none"

    def __post_init__(self):
        if self.branch not in ("alignment", "translation"):
            raise ValueError(f"unknown branch {self.branch!r}")
        if self.context not in ("none", "prev", "prev_and_next"):
            raise ValueError(f"unknown context mode {self.context!r}")


def sample_task(rng: np.random.Generator) -> TaskDescriptor:
    """Draw a task configuration with the mixture weights."""
    if rng.random() < P_ALIGNMENT:
        input_breaks = rng.random() < P_INPUT_SPECIFIES_BREAKS
        dur_cond = (not input_breaks) and rng.random() < P_ALIGN_DURATION_COND
        overflow = rng.random() < P_SPAN_OVERFLOW
        return TaskDescriptor(branch="alignment",
                              input_specifies_breaks=input_breaks,
                              duration_conditioning=dur_cond,
                              span_overflow=overflow)
    timed = rng.random() < P_TIMED
    dur_cond = timed and rng.random() < P_TRANSLATE_DURATION_COND
    u = rng.random()
    acc = 0.0
    context = CONTEXT_WEIGHTS[-1][0]
    for name, w in CONTEXT_WEIGHTS:
        acc += w
        if u < acc:
            context = name
            break
    return TaskDescriptor(branch="translation", timed=timed,
                          duration_conditioning=dur_cond, context=context)


def render_timed_track(captions: Sequence[Caption], origin_s: float,
                       grammar: TimestampGrammar = DEFAULT_GRAMMAR) -> str:
    """Render captions as clip-relative timed lines, ordered by start."""
    lines = []
    for cap in sorted(captions, key=lambda c: c.span.start_s):
        rel_start = grammar.quantize(cap.span.start_s - origin_s)
        rel_end = grammar.quantize(cap.span.end_s - origin_s)
        if rel_start < 0 or rel_end > grammar.max_s:
            raise CaptionOutsideWindow(
                f"caption [{cap.span.start_s}, {cap.span.end_s}] outside window "
                f"[{origin_s}, {origin_s + grammar.max_s}]")
        lines.append(f"{grammar.stamp(rel_start)}{grammar.stamp(rel_end)} {cap.text}")
    return "\n".join(lines)


@dataclass(frozen=True)
class LineDiagnostic:
    line_no: int
    code: str  # MalformedTimestamp | NonMonotonic | OutOfWindow
    detail: str


@dataclass(frozen=True)
class ParsedTrack:
    captions: tuple[Caption, ...]
    diagnostics: tuple[LineDiagnostic, ...]


def parse_timed_track(text: str, origin_s: float,
                      grammar: TimestampGrammar = DEFAULT_GRAMMAR) -> ParsedTrack:
    """Parse timed caption lines back into absolute-time captions.

    Violating lines are rejected with a diagnostic, never repaired; the
    parse itself always succeeds. Accepted lines are non-overlapping and
    ordered; times are snapped to the grammar quantum.
    """
    captions: list[Caption] = []
    diagnostics: list[LineDiagnostic] = []
    last_end = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _LINE_RE.match(line)
        if not m:
            diagnostics.append(LineDiagnostic(line_no, "MalformedTimestamp",
                                              f"unparseable line {line!r}"))
            continue
        rel_start = grammar.quantize(float(m.group(1)))
        rel_end = grammar.quantize(float(m.group(2)))
        if rel_start < 0 or rel_end > grammar.max_s + 1e-9:
            diagnostics.append(LineDiagnostic(
                line_no, "OutOfWindow",
                f"[{rel_start}, {rel_end}] outside [0, {grammar.max_s}]"))
            continue
        if rel_end < rel_start:
            diagnostics.append(LineDiagnostic(
                line_no, "NonMonotonic", f"end {rel_end} before start {rel_start}"))
            continue
        if last_end is not None and rel_start < last_end:
            diagnostics.append(LineDiagnostic(
                line_no, "NonMonotonic",
                f"start {rel_start} before previous end {last_end}"))
            continue
        last_end = rel_end
        captions.append(Caption(
            TimeSpan(quantize_ms(origin_s + rel_start), quantize_ms(origin_s + rel_end)),
            m.group(3), index=len(captions)))
    return ParsedTrack(tuple(captions), tuple(diagnostics))


def default_unit_splitter(text: str) -> list[str]:
    """Budget unit = whitespace-delimited word; swap in a model tokenizer to
    match a real vocabulary."""
    return text.split()


def truncate_context(text: str, budget: int = DEFAULT_CONTEXT_BUDGET,
                     unit_splitter: Callable[[str], list[str]] | None = None) -> str:
    """Suffix-preserving truncation to at most ``budget`` units.

    Newlines mark caption boundaries; the cut lands on a boundary when
    possible, otherwise inside the most recent caption at a unit boundary.
    """
    splitter = unit_splitter or default_unit_splitter
    if budget <= 0:
        return ""
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        return ""
    kept: list[str] = []
    used = 0
    for line in reversed(lines):
        units = splitter(line)
        if used + len(units) > budget:
            if not kept:
                kept.append(" ".join(units[len(units) - budget:]))
            break
        kept.append(line)
        used += len(units)
    return "\n".join(reversed(kept))


def translation_input(prior_context: str | None = None,
                      next_context: str | None = None,
                      avg_caption_duration_s: float | None = None,
                      budget: int = DEFAULT_CONTEXT_BUDGET,
                      unit_splitter: Callable[[str], list[str]] | None = None,
                      grammar: TimestampGrammar = DEFAULT_GRAMMAR) -> str:
    """Input text for a translation call: task tag, optional conditioning,
    optional prior/following text context (newline = caption boundary)."""
    head = [TASK_TRANSLATE]
    if avg_caption_duration_s is not None:
        head.append(grammar.conditioning("avgdur", avg_caption_duration_s))
    segments = [" ".join(head)]
    if prior_context:
        kept = truncate_context(prior_context, budget, unit_splitter)
        if kept:
            segments.append(kept)
    if next_context:
        splitter = unit_splitter or default_unit_splitter
        units = [u for line in next_context.split("\n") for u in splitter(line)]
        if len(units) > budget:
            next_context = " ".join(units[:budget])
        if next_context:
            segments.append(NEXT_CONTEXT + "\n" + next_context)
    return "\n".join(segments)


def alignment_input(left_edge_rel_s: float, caption_texts: Sequence[str],
                    input_specifies_breaks: bool,
                    avg_caption_duration_s: float | None = None,
                    grammar: TimestampGrammar = DEFAULT_GRAMMAR) -> str:
    """Input text for an alignment call: task tag, optional conditioning,
    the left-edge anchor, then the captions to align."""
    head = [TASK_ALIGN]
    if avg_caption_duration_s is not None:
        head.append(grammar.conditioning("avgdur", avg_caption_duration_s))
    head.append(grammar.conditioning("left", max(0.0, min(left_edge_rel_s,
                                                          grammar.max_s))))
    sep = "\n" if input_specifies_breaks else " "
    body = sep.join(caption_texts)
    return " ".join(head) + ("\n" + body if body else "")


@dataclass(frozen=True, eq=False)
class ModelExample:
    """A rendered (input text, target text, feature slice) training triple."""

    input_text: str
    target_text: str
    clip: ClipSpec
    descriptor: TaskDescriptor
    feature_slice: FeatureSlice | None = None
    overflow_clamped: bool = False  # an alignment target end was cut at the window


def _timed_target(captions: Sequence[Caption], clip: TimeSpan,
                  grammar: TimestampGrammar) -> tuple[str, bool]:
    """Timed lines for captions starting inside the clip; ends past the
    window are clamped to it and flagged."""
    clamped = False
    renderable = []
    for cap in captions:
        end = cap.span.end_s
        if grammar.quantize(end - clip.start_s) > grammar.max_s:
            end = clip.start_s + grammar.max_s
            clamped = True
        renderable.append(Caption(TimeSpan(cap.span.start_s, quantize_ms(end)),
                                  cap.text, cap.index))
    return render_timed_track(renderable, clip.start_s, grammar), clamped


def render_example(chunk: ChunkRecord, clip: ClipSpec, desc: TaskDescriptor,
                   grammar: TimestampGrammar = DEFAULT_GRAMMAR, *,
                   feature_slice: FeatureSlice | None = None,
                   rng: np.random.Generator | None = None,
                   context_budget: int = DEFAULT_CONTEXT_BUDGET,
                   unit_splitter: Callable[[str], list[str]] | None = None,
                   ) -> ModelExample:
    """Assemble the (input, target) pair for a clip under a task descriptor.

    ``rng`` is required for alignment subset tasks (the prefix length is
    random). Feature emptiness is the caller's signal that the clip missed
    the payload; it is rejected here.
    """
    if feature_slice is not None and feature_slice.frame_count == 0:
        raise EmptyClip(f"clip {clip} has no feature frames")
    span = clip.abs_span(chunk)
    n_s = grammar.max_s
    window = classify_window_captions(chunk.context_captions, span, n_s)

    if desc.branch == "alignment":
        return _render_alignment(chunk, clip, span, desc, grammar, window,
                                 feature_slice, rng)
    return _render_translation(chunk, clip, span, desc, grammar, window,
                               feature_slice, context_budget, unit_splitter)


def _render_alignment(chunk, clip, span, desc, grammar, window,
                      feature_slice, rng) -> ModelExample:
    avgdur = None
    if desc.duration_conditioning and not desc.input_specifies_breaks:
        avgdur = chunk.avg_caption_duration_s
    left_rel = 0.0
    if window.left_edge_end_s is not None:
        left_rel = window.left_edge_end_s - span.start_s

    # alignable candidates start inside the clip; overflow inputs also carry
    # the captions beyond it so whole-video alignment can keep feeding text
    candidates = [c for c in chunk.context_captions
                  if span.start_s <= c.span.start_s < span.end_s]
    if desc.span_overflow:
        input_captions = [c for c in chunk.context_captions
                          if c.span.start_s >= span.start_s]
        target_captions = candidates
    else:
        if rng is None:
            raise ValueError("alignment subset tasks need an rng for the prefix length")
        k = int(rng.integers(1, len(candidates) + 1)) if candidates else 0
        input_captions = candidates[:k]
        target_captions = input_captions
    input_text = alignment_input(left_rel, [c.text for c in input_captions],
                                 desc.input_specifies_breaks, avgdur, grammar)
    target_text, clamped = _timed_target(target_captions, span, grammar)
    return ModelExample(input_text=input_text, target_text=target_text,
                        clip=clip, descriptor=desc, feature_slice=feature_slice,
                        overflow_clamped=clamped)


def _render_translation(chunk, clip, span, desc, grammar, window,
                        feature_slice, context_budget, unit_splitter) -> ModelExample:
    avgdur = None
    if desc.timed and desc.duration_conditioning:
        avgdur = chunk.avg_caption_duration_s
    prev_text = None
    if desc.context in ("prev", "prev_and_next") and window.prev:
        prev_text = "\n".join(c.text for c in window.prev)
    next_text = None
    if desc.context == "prev_and_next" and window.next:
        next_text = "\n".join(c.text for c in window.next)
    input_text = translation_input(prev_text, next_text, avgdur,
                                   context_budget, unit_splitter, grammar)

    if desc.timed:
        target_text = render_timed_track(window.curr, span.start_s, grammar)
    else:
        target_text = " ".join(c.text for c in window.curr)
    return ModelExample(input_text=input_text, target_text=target_text,
                        clip=clip, descriptor=desc, feature_slice=feature_slice)
