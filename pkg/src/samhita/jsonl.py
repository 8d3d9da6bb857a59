"""JSONL reading/writing with atomic replace and stable field order.

All output files are UTF-8, one JSON object per line, written to a temp file
in the same directory and renamed into place so a failed stage never leaves a
half-written artifact behind.
"""

from __future__ import annotations

import json
import os
import tempfile
import unicodedata
from pathlib import Path
from typing import Any, Iterable, Iterator


def nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def dumps(record: Any) -> str:
    """Serialize one record compactly, preserving dict insertion order."""
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def read_jsonl(path: str | os.PathLike) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON: {exc}") from exc


def write_jsonl(path: str | os.PathLike, records: Iterable[Any], header: Any | None = None) -> int:
    """Atomically write records (and an optional leading header object).

    Returns the number of data records written (header excluded).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            if header is not None:
                fh.write(dumps(header) + "\n")
            for record in records:
                fh.write(dumps(record) + "\n")
                count += 1
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return count


def write_text(path: str | os.PathLike, text: str) -> None:
    """Atomic full-file text write."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
