"""Append-only JSONL journal keyed by (plot_id, actor, ordinal, stage).

Records with status ``ok`` or ``empty`` are complete and are never re-run on
resume; ``error`` records (gateway/protocol failures) are retried.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

Key = tuple[str, "str | None", "int | None", str]

COMPLETE = ("ok", "empty")


def record_key(rec: dict) -> Key:
    return (rec["plot_id"], rec.get("actor"), rec.get("ordinal"), rec["stage"])


@dataclass
class JournalScan:
    records: list[dict] = field(default_factory=list)
    bad_lines: list[int] = field(default_factory=list)


def scan(path: Path | str) -> JournalScan:
    out = JournalScan()
    p = Path(path)
    if not p.exists():
        return out
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                record_key(rec)
            except (json.JSONDecodeError, KeyError, TypeError):
                out.bad_lines.append(lineno)
                continue
            out.records.append(rec)
    return out


def latest(records: list[dict]) -> dict[Key, dict]:
    """Last complete record per key, falling back to the last error."""
    best: dict[Key, dict] = {}
    for rec in records:
        k = record_key(rec)
        prev = best.get(k)
        if prev is None or rec.get("status") in COMPLETE or prev.get("status") not in COMPLETE:
            best[k] = rec
    return best


class Journal:
    """Single-writer journal; ``append`` is serialised with a lock."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        s = scan(self.path)
        self.bad_lines = s.bad_lines
        self._done = {k: r for k, r in latest(s.records).items() if r.get("status") in COMPLETE}
        self._lock = threading.Lock()
        self._fh = open(self.path, "a", encoding="utf-8")

    def done(self, key: Key) -> dict | None:
        return self._done.get(key)

    def __len__(self) -> int:
        return len(self._done)

    def append(self, rec: dict) -> None:
        line = json.dumps(rec, ensure_ascii=False)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()
            if rec.get("status") in COMPLETE:
                self._done[record_key(rec)] = rec

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.close()

    def __enter__(self) -> "Journal":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def iter_records(path: Path | str) -> Iterator[dict]:
    yield from scan(path).records
