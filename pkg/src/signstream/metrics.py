"""Scoring: corpus BLEU with international tokenization, Timed BLEU via
character-level temporal interpolation, frame-accuracy alignment scoring,
and the model-free length-scaling alignment baseline.

BLEU defaults follow the standard scorer: case-sensitive, 4-gram, single
reference, no smoothing (a zero n-gram precision zeroes the score). The
tokenizer reproduces mteval-v14 international behavior: unicode punctuation
and symbols split into their own tokens unless the punctuation sits between
digits.

Timed BLEU reslices a timed hypothesis track onto the reference caption
spans: each hypothesis character gets the midpoint-rule time
``start + (i + 0.5) * duration / k`` and lands in the reference segment
whose span contains it; characters covered by no reference span are dropped
(noted in the report signature).
"""

from __future__ import annotations

import functools
import math
import re
import sys
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

from .captions import Caption, CaptionTrack, TimeSpan, quantize_ms
from .errors import DurationMismatch, EmptyTexts, LengthMismatch

NGRAM_ORDER = 4
TOKENIZER_NAME = "intl-v14"
SCORER_VERSION = "signstream-bleu-1"


@functools.lru_cache(maxsize=1)
def _unicode_classes() -> tuple[str, str]:
    punct = []
    symbol = []
    for cp in range(sys.maxunicode + 1):
        cat = unicodedata.category(chr(cp))
        if cat.startswith("P"):
            punct.append(chr(cp))
        elif cat.startswith("S"):
            symbol.append(chr(cp))
    return "".join(punct), "".join(symbol)


@functools.lru_cache(maxsize=1)
def _intl_regexes() -> tuple[re.Pattern, re.Pattern, re.Pattern]:
    punct, symbol = _unicode_classes()
    punct_cc = re.escape(punct)
    return (re.compile(f"([^\\d])([{punct_cc}])"),
            re.compile(f"([{punct_cc}])([^\\d])"),
            re.compile(f"([{re.escape(symbol)}])"))


def tokenize_intl(text: str) -> list[str]:
    """mteval-v14 international tokenization.

    Punctuation splits off unless both neighbors are digits, symbols always
    split, whitespace collapses. Deterministic and stateless.
    """
    nondigit_punct, punct_nondigit, symbol = _intl_regexes()
    text = nondigit_punct.sub(r"\1 \2 ", text)
    text = punct_nondigit.sub(r" \1 \2", text)
    text = symbol.sub(r" \1 ", text)
    return text.split()


@dataclass(frozen=True)
class BleuReport:
    """Corpus BLEU with its full component breakdown; score is 0..100."""

    score: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    signature: str

    def format(self) -> str:
        parts = "/".join(f"{p:.1f}" for p in self.precisions)
        return (f"BLEU = {self.score:.4f} {parts} "
                f"(BP = {self.brevity_penalty:.4f} hyp_len = {self.hyp_len} "
                f"ref_len = {self.ref_len}) [{self.signature}]")


def _ngrams(tokens: list[str], max_order: int = NGRAM_ORDER) -> Counter:
    grams: Counter = Counter()
    for n in range(1, max_order + 1):
        for i in range(len(tokens) - n + 1):
            grams[tuple(tokens[i:i + n])] += 1
    return grams


def corpus_bleu(hypotheses: Sequence[str], references: Sequence[str],
                tokenizer: Callable[[str], list[str]] = tokenize_intl,
                signature_extra: str = "") -> BleuReport:
    """Corpus-level BLEU over aligned hypothesis/reference segments."""
    if len(hypotheses) != len(references):
        raise LengthMismatch(
            f"{len(hypotheses)} hypotheses vs {len(references)} references")
    correct = [0] * NGRAM_ORDER
    total = [0] * NGRAM_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_tokens = tokenizer(hyp)
        ref_tokens = tokenizer(ref)
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        ref_grams = _ngrams(ref_tokens)
        for gram, count in _ngrams(hyp_tokens).items():
            n = len(gram)
            total[n - 1] += count
            correct[n - 1] += min(count, ref_grams.get(gram, 0))

    precisions = tuple(
        (100.0 * c / t) if t > 0 else 0.0 for c, t in zip(correct, total))
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len < ref_len:
        bp = math.exp(1.0 - ref_len / hyp_len)
    else:
        bp = 1.0
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        score = bp * math.exp(sum(math.log(p / 100.0) for p in precisions)
                              / NGRAM_ORDER) * 100.0
    sig = (f"{SCORER_VERSION}|tok:{TOKENIZER_NAME}|smooth:none|case:mixed|"
           f"refs:1|segments:{len(hypotheses)}")
    if signature_extra:
        sig += "|" + signature_extra
    return BleuReport(score=score, precisions=precisions, brevity_penalty=bp,
                      hyp_len=hyp_len, ref_len=ref_len, signature=sig)


def char_times(caption: Caption) -> list[float]:
    """Midpoint-rule timestamp for each character of a caption."""
    k = len(caption.text)
    start, dur = caption.span.start_s, caption.span.duration_s
    if dur == 0.0:
        return [start] * k
    return [start + (i + 0.5) * dur / k for i in range(k)]


def reslice_by_reference(hyp_track: CaptionTrack,
                         ref_track: CaptionTrack) -> list[str]:
    """Redistribute hypothesis text onto the reference caption spans.

    Segment i collects, in order, every hypothesis character whose
    interpolated time falls in [ref_i.start, ref_i.end); characters in no
    reference span are dropped. Whitespace is re-normalized per segment.
    """
    refs = ref_track.captions
    buckets: list[list[str]] = [[] for _ in refs]
    starts = [r.span.start_s for r in refs]
    ends = [r.span.end_s for r in refs]
    for cap in hyp_track:
        for ch, t in zip(cap.text, char_times(cap)):
            # refs are sorted and non-overlapping: binary search the segment
            lo, hi = 0, len(refs) - 1
            idx = -1
            while lo <= hi:
                mid = (lo + hi) // 2
                if t < starts[mid]:
                    hi = mid - 1
                elif t >= ends[mid]:
                    lo = mid + 1
                else:
                    idx = mid
                    break
            if idx >= 0:
                buckets[idx].append(ch)
    return [" ".join("".join(b).split()) for b in buckets]


def timed_bleu(hyp_track: CaptionTrack, ref_track: CaptionTrack,
               tokenizer: Callable[[str], list[str]] = tokenize_intl) -> BleuReport:
    """BLEU after temporal reslicing of the hypothesis onto reference spans."""
    segments = reslice_by_reference(hyp_track, ref_track)
    report = corpus_bleu(segments, ref_track.texts(), tokenizer,
                         signature_extra="timed:char-midpoint|gap-chars:dropped")
    return report


def export_segments(hyp_track: CaptionTrack, ref_track: CaptionTrack,
                    ) -> list[tuple[int, str, str]]:
    """(segment_id, resliced hyp text, ref text) triples for external scorers."""
    segments = reslice_by_reference(hyp_track, ref_track)
    return [(i, seg, ref.text)
            for i, (seg, ref) in enumerate(zip(segments, ref_track.captions))]


@dataclass(frozen=True)
class AlignmentReport:
    """Frame accuracy of a predicted track against a reference track."""

    frame_accuracy: float
    eval_fps: float
    total_frames: int
    matching_frames: int
    per_video: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.frame_accuracy <= 1.0:
            raise ValueError(f"frame accuracy {self.frame_accuracy} outside [0, 1]")


BACKGROUND = -1


def _frame_labels(track: CaptionTrack, n_frames: int, eval_fps: float) -> list[int]:
    labels = [BACKGROUND] * n_frames
    for cap in track:
        lo = max(0, int(cap.span.start_s * eval_fps) - 1)
        hi = min(n_frames, int(cap.span.end_s * eval_fps) + 2)
        for k in range(lo, hi):
            # label a frame by the caption covering its center
            t = (k + 0.5) / eval_fps
            if cap.span.start_s <= t < cap.span.end_s:
                labels[k] = cap.index
    return labels


def frame_accuracy(pred_track: CaptionTrack, ref_track: CaptionTrack,
                   eval_fps: float = 30.0) -> AlignmentReport:
    """Fraction of evaluation frames whose caption label matches.

    Frames are sampled at centers; the label is the covering caption's index
    or background. Tracks must agree on video duration to within one frame.
    """
    dur = ref_track.video_duration_s
    if abs(pred_track.video_duration_s - dur) > 1.0 / eval_fps + 1e-9:
        raise DurationMismatch(
            f"predicted duration {pred_track.video_duration_s}s vs "
            f"reference {dur}s")
    n_frames = int(round(dur * eval_fps))
    if n_frames == 0:
        return AlignmentReport(1.0, eval_fps, 0, 0)
    ref_labels = _frame_labels(ref_track, n_frames, eval_fps)
    pred_labels = _frame_labels(pred_track, n_frames, eval_fps)
    matches = sum(1 for a, b in zip(ref_labels, pred_labels) if a == b)
    return AlignmentReport(frame_accuracy=matches / n_frames, eval_fps=eval_fps,
                           total_frames=n_frames, matching_frames=matches)


def combine_frame_accuracy(per_video: Sequence[tuple[str, AlignmentReport]],
                           ) -> AlignmentReport:
    """Pool per-video frame-accuracy reports into one corpus report."""
    total = sum(r.total_frames for _, r in per_video)
    matching = sum(r.matching_frames for _, r in per_video)
    fps = per_video[0][1].eval_fps if per_video else 30.0
    return AlignmentReport(
        frame_accuracy=(matching / total) if total else 1.0,
        eval_fps=fps, total_frames=total, matching_frames=matching,
        per_video=tuple((vid, r.frame_accuracy) for vid, r in per_video))


def length_scaling_align(caption_texts: Sequence[str],
                         video_span: TimeSpan) -> CaptionTrack:
    """Model-free alignment baseline: caption boundaries placed along the
    span in proportion to cumulative character counts. Contiguous, gapless,
    ends exactly at the span end."""
    texts = list(caption_texts)
    total_chars = sum(len(t) for t in texts)
    if not texts or total_chars == 0:
        raise EmptyTexts("length scaling needs non-empty caption texts")
    duration = video_span.duration_s
    items = []
    boundary = video_span.start_s
    cumulative = 0
    for i, text in enumerate(texts):
        cumulative += len(text)
        if i == len(texts) - 1:
            nxt = video_span.end_s
        else:
            nxt = quantize_ms(video_span.start_s + duration * cumulative / total_chars)
        items.append((boundary, nxt, text))
        boundary = nxt
    return CaptionTrack.build(items, video_duration_s=video_span.end_s)
