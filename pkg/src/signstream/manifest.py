"""Video manifest: one JSON record per line, one video per record.

Fields: ``video_id``, ``signer_id``, ``split``, ``article_id``,
``caption_track_ref`` and optionally ``feature_track_ref``. Lines starting
with ``#`` and blank lines are ignored, so provenance headers pass through.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .errors import DuplicateVideoId, MissingField, UnknownSplit

SPLITS = ("zs", "si-train", "si-test", "sd-train", "sd-test")

_REQUIRED = ("video_id", "signer_id", "split", "article_id", "caption_track_ref")


@dataclass(frozen=True)
class ManifestEntry:
    video_id: str
    signer_id: int
    split: str
    article_id: str
    caption_track_ref: str
    feature_track_ref: str | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise UnknownSplit(f"unknown split {self.split!r} (expected one of {SPLITS})")
        if self.signer_id < 0:
            raise ValueError(f"negative signer_id {self.signer_id}")


def load_manifest(data: bytes | str) -> list[ManifestEntry]:
    """Parse and validate a line-delimited manifest."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise MissingField(f"line {line_no}: not a valid record: {e}") from e
        if not isinstance(record, dict):
            raise MissingField(f"line {line_no}: record is not a key/value object")
        missing = [f for f in _REQUIRED if f not in record]
        if missing:
            raise MissingField(f"line {line_no}: missing fields {missing}")
        entry = ManifestEntry(
            video_id=str(record["video_id"]),
            signer_id=int(record["signer_id"]),
            split=str(record["split"]),
            article_id=str(record["article_id"]),
            caption_track_ref=str(record["caption_track_ref"]),
            feature_track_ref=(str(record["feature_track_ref"])
                               if record.get("feature_track_ref") is not None else None),
        )
        if entry.video_id in seen:
            raise DuplicateVideoId(f"line {line_no}: duplicate video_id {entry.video_id!r}")
        seen.add(entry.video_id)
        entries.append(entry)
    return entries


def dump_manifest(entries: list[ManifestEntry]) -> bytes:
    """Serialize manifest entries, one JSON object per line."""
    lines = []
    for e in entries:
        record = asdict(e)
        if record["feature_track_ref"] is None:
            del record["feature_track_ref"]
        lines.append(json.dumps(record, ensure_ascii=False, sort_keys=True))
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")
