"""External translator protocol: line-delimited JSON over a subprocess.

Request:  ``{"request_id", "window_start_s", "feature_file", "frame_range",
"input_text"}``; response: ``{"request_id", "output_text"}``. One request in
flight per video; UTF-8, one JSON object per line. The subprocess reads the
frames itself from ``feature_file`` (our binary format) so bulk data never
crosses the pipe.
"""

from __future__ import annotations

import json
import os
import subprocess
import tempfile
from pathlib import Path

from .errors import TranslatorFailure
from .features import FeatureSlice, FeatureTrack, write_feature_track

TMPDIR_ENV = "SIGNSTREAM_TMPDIR"


class SubprocessTranslator:
    """Drives one external translator process for one video's features."""

    def __init__(self, command: list[str], feature_track: FeatureTrack,
                 feature_file: str | os.PathLike | None = None):
        self._tempdir = None
        if feature_file is None:
            self._tempdir = tempfile.TemporaryDirectory(
                dir=os.environ.get(TMPDIR_ENV) or None)
            feature_file = Path(self._tempdir.name) / "features.feat"
            feature_file.write_bytes(write_feature_track(feature_track))
        self.feature_file = str(feature_file)
        self._next_id = 0
        try:
            self._proc = subprocess.Popen(
                command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, encoding="utf-8", bufsize=1)
        except OSError as e:
            raise TranslatorFailure(f"cannot start translator {command!r}: {e}") from e

    def translate(self, features: FeatureSlice, input_text: str) -> str:
        self._next_id += 1
        request = {
            "request_id": self._next_id,
            "window_start_s": features.start_s,
            "feature_file": self.feature_file,
            "frame_range": [features.start_frame,
                            features.start_frame + features.frame_count],
            "input_text": input_text,
        }
        if self._proc.poll() is not None:
            raise TranslatorFailure(
                f"translator exited with code {self._proc.returncode}")
        try:
            self._proc.stdin.write(json.dumps(request, ensure_ascii=False) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as e:
            raise TranslatorFailure(f"translator pipe failed: {e}") from e
        if not line:
            raise TranslatorFailure("translator closed its output stream")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as e:
            raise TranslatorFailure(f"unparseable translator response: {line!r}") from e
        if response.get("request_id") != self._next_id:
            raise TranslatorFailure(
                f"response id {response.get('request_id')} does not match "
                f"request {self._next_id}")
        if "output_text" not in response:
            raise TranslatorFailure(f"response missing output_text: {response!r}")
        return str(response["output_text"])

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except Exception:
                self._proc.kill()
        if self._tempdir is not None:
            self._tempdir.cleanup()
            self._tempdir = None

    def __enter__(self) -> "SubprocessTranslator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
