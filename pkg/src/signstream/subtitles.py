"""WebVTT / SRT parsing and serialization at millisecond precision.

Round-trip guarantee: ``parse(serialize(track), fmt) == track`` for any track
whose times sit on the millisecond grid and whose duration equals its last
caption end (neither format stores a video duration). Overlapping or
out-of-order cues are rejected, never repaired.

Caption text restrictions enforced on serialize (silent corruption is never
an option): no blank interior lines, no carriage returns, and for SRT no
``-->`` (WebVTT escapes it as an entity).
"""

from __future__ import annotations

import re

from .captions import Caption, CaptionTrack, TimeSpan, quantize_ms
from .errors import MalformedCue, NonMonotonicTimes, OverlappingCues

FORMATS = ("vtt", "srt")

_TIME_RE = re.compile(
    r"^(?:(\d{1,3}):)?(\d{1,2}):(\d{2})[.,](\d{3})$")
_ARROW = "-->"


def _parse_timestamp(token: str, line_no: int) -> float:
    m = _TIME_RE.match(token)
    if not m:
        raise MalformedCue(f"bad timestamp {token!r}", line=line_no)
    hours = int(m.group(1) or 0)
    minutes, seconds, millis = int(m.group(2)), int(m.group(3)), int(m.group(4))
    if minutes >= 60 or seconds >= 60:
        raise MalformedCue(f"timestamp field out of range in {token!r}", line=line_no)
    return quantize_ms(hours * 3600 + minutes * 60 + seconds + millis / 1000.0)


def _format_timestamp(t: float, sep: str) -> str:
    ms_total = round(t * 1000)
    s, ms = divmod(ms_total, 1000)
    m, s = divmod(s, 60)
    h, m = divmod(m, 60)
    return f"{h:02d}:{m:02d}:{s:02d}{sep}{ms:03d}"


def _parse_cue_times(line: str, line_no: int) -> tuple[float, float]:
    if _ARROW not in line:
        raise MalformedCue("missing '-->' in cue timing line", line=line_no)
    left, _, right = line.partition(_ARROW)
    # VTT allows cue settings after the end time; ignore them
    right = right.strip().split(" ")[0] if right.strip() else right
    start = _parse_timestamp(left.strip(), line_no)
    end = _parse_timestamp(right.strip(), line_no)
    if end < start:
        raise MalformedCue(f"cue ends at {end}s before start {start}s", line=line_no)
    return start, end


_VTT_UNESCAPES = (("&lt;", "<"), ("&gt;", ">"), ("&amp;", "&"))


def _vtt_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _vtt_unescape(text: str) -> str:
    for entity, char in _VTT_UNESCAPES:
        text = text.replace(entity, char)
    return text


def _check_serializable(text: str, fmt: str) -> None:
    if "\r" in text:
        raise ValueError(f"caption text contains carriage return: {text!r}")
    if any(not line.strip() for line in text.split("\n")):
        raise ValueError(f"caption text has a blank line: {text!r}")
    if fmt == "srt" and _ARROW in text:
        raise ValueError(f"SRT cannot represent '-->' in caption text: {text!r}")


def _validate_order(cues: list[tuple[float, float, str]]) -> None:
    for i in range(1, len(cues)):
        if cues[i][0] < cues[i - 1][0]:
            raise NonMonotonicTimes(
                f"cue {i + 1} starts at {cues[i][0]}s before cue {i} "
                f"at {cues[i - 1][0]}s")
        if cues[i][0] < cues[i - 1][1]:
            raise OverlappingCues(
                f"cue {i + 1} [{cues[i][0]}, {cues[i][1]}] overlaps "
                f"cue {i} [{cues[i - 1][0]}, {cues[i - 1][1]}]")


def _blocks(lines: list[str]) -> list[tuple[int, list[str]]]:
    """Split lines into blank-separated blocks, keeping 1-based line numbers."""
    blocks: list[tuple[int, list[str]]] = []
    current: list[str] = []
    start = 1
    for i, line in enumerate(lines, start=1):
        if line.strip():
            if not current:
                start = i
            current.append(line)
        elif current:
            blocks.append((start, current))
            current = []
    if current:
        blocks.append((start, current))
    return blocks


def parse_caption_file(data: bytes | str, fmt: str) -> CaptionTrack:
    """Parse a WebVTT or SRT file into a caption track.

    The track duration is the last cue's end time (the formats carry no
    video duration of their own).
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown subtitle format {fmt!r}")
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    text = text.lstrip("﻿")
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")

    blocks = _blocks(lines)
    if fmt == "vtt":
        if not blocks or not blocks[0][1][0].startswith("WEBVTT"):
            raise MalformedCue("missing WEBVTT header", line=1)
        header_block = blocks[0]
        blocks = blocks[1:]
        # header block may carry metadata lines; cues never share it
        if len(header_block[1]) > 1 and _ARROW in "".join(header_block[1][1:]):
            raise MalformedCue("cue must be separated from the WEBVTT header "
                               "by a blank line", line=header_block[0])

    cues: list[tuple[float, float, str]] = []
    for start_line, block in blocks:
        if fmt == "vtt" and block[0].startswith(("NOTE", "STYLE", "REGION")):
            continue
        idx = 0
        if _ARROW not in block[0]:
            # SRT numeric counter or VTT cue identifier
            idx = 1
            if fmt == "srt" and not block[0].strip().isdigit():
                raise MalformedCue(
                    f"expected cue counter, got {block[0]!r}", line=start_line)
            if idx >= len(block) or _ARROW not in block[idx]:
                raise MalformedCue("cue has no timing line", line=start_line)
        start, end = _parse_cue_times(block[idx], start_line + idx)
        body_lines = block[idx + 1:]
        if not body_lines:
            raise MalformedCue("cue has no text", line=start_line + idx)
        body = "\n".join(body_lines)
        if fmt == "vtt":
            body = _vtt_unescape(body)
        cues.append((start, end, body))

    _validate_order(cues)
    return CaptionTrack.build(cues)


def serialize_caption_file(track: CaptionTrack, fmt: str) -> bytes:
    """Serialize a caption track as WebVTT or SRT (UTF-8)."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown subtitle format {fmt!r}")
    for cap in track:
        _check_serializable(cap.text, fmt)

    out: list[str] = []
    if fmt == "vtt":
        out.append("WEBVTT")
        out.append("")
        for cap in track:
            out.append(f"{_format_timestamp(cap.start_s, '.')} {_ARROW} "
                       f"{_format_timestamp(cap.end_s, '.')}")
            out.append(_vtt_escape(cap.text))
            out.append("")
    else:
        for i, cap in enumerate(track, start=1):
            out.append(str(i))
            out.append(f"{_format_timestamp(cap.start_s, ',')} {_ARROW} "
                       f"{_format_timestamp(cap.end_s, ',')}")
            out.append(cap.text)
            out.append("")
    return "\n".join(out).encode("utf-8")


def detect_format(path_or_name: str) -> str:
    """Guess the subtitle format from a filename extension (default vtt)."""
    return "srt" if str(path_or_name).lower().endswith(".srt") else "vtt"
