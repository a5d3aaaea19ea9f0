"""Append-only JSON-lines stores with durable, crash-safe appends.

Used for both the annotation store (``annotations.jsonl``) and per-run
prediction records. Each append writes one full line with a single
``os.write`` on an O_APPEND descriptor and fsyncs before returning, so an
acknowledged record survives an immediate process kill and concurrent
writers never interleave within a line.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Callable, Iterable, Mapping


class JsonlStore:
    """Thread-safe append-only JSONL file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: Mapping) -> None:
        """Durably append one record; returns only after fsync."""
        line = json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n"
        data = line.encode("utf-8")
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            fd = os.open(self.path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
            try:
                os.write(fd, data)
                os.fsync(fd)
            finally:
                os.close(fd)

    def read_raw(self) -> list[dict]:
        """All complete records in file order; a truncated final line is ignored."""
        if not self.path.is_file():
            return []
        records = []
        data = self.path.read_bytes()
        for raw_line in data.split(b"\n"):
            if not raw_line.strip():
                continue
            try:
                records.append(json.loads(raw_line.decode("utf-8")))
            except (json.JSONDecodeError, UnicodeDecodeError):
                # A kill between appends cannot split a line, but be defensive
                # against external corruption: drop unparseable lines.
                continue
        return records

    def recover(self) -> int:
        """Truncate any trailing partial line; returns bytes removed."""
        if not self.path.is_file():
            return 0
        data = self.path.read_bytes()
        keep = len(data)
        if keep and not data.endswith(b"\n"):
            last_nl = data.rfind(b"\n")
            keep = last_nl + 1 if last_nl >= 0 else 0
        if keep == len(data):
            return 0
        with self._lock, open(self.path, "r+b") as fh:
            fh.truncate(keep)
            fh.flush()
            os.fsync(fh.fileno())
        return len(data) - keep

    def export_latest(self, key_fn: Callable[[Mapping], tuple]) -> list[dict]:
        """Resolve duplicate keys last-write-wins; keys keep first-seen order."""
        latest: dict[tuple, dict] = {}
        for rec in self.read_raw():
            # dict assignment keeps the first-seen position for repeated keys
            latest[key_fn(rec)] = rec
        return list(latest.values())


def annotation_key(record: Mapping) -> tuple:
    return (record.get("annotator_id"), record.get("instance_id"), record.get("robot_id"))


def prediction_key(record: Mapping) -> tuple:
    return (
        record.get("instance_id"),
        record.get("robot_id"),
        record.get("model_tag"),
        record.get("strategy"),
        record.get("temperature"),
        record.get("query_mode"),
    )


def read_annotation_lines(path: str | Path) -> list[dict]:
    """Raw annotation dicts, duplicates unresolved (for validation)."""
    return JsonlStore(path).read_raw()


def export_annotations(path: str | Path) -> list[dict]:
    """Annotation dicts with duplicate (annotator, instance, robot) keys
    resolved last-write-wins."""
    return JsonlStore(path).export_latest(annotation_key)


def load_annotation_records(path: str | Path):
    """Typed AnnotationRecords from the export view of the store."""
    from .dataset import parse_annotation_record

    return [parse_annotation_record(raw) for raw in export_annotations(path)]


def write_jsonl(path: str | Path, records: Iterable[Mapping]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
