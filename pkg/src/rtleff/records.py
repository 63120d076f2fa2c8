"""Append-only JSONL record log.

Each line is ``{"stage", "key", "payload", "config_hash"}`` serialized with
sorted keys. The log is the single source of truth for a run: reports and
scores are derived from it, and resuming skips keys already present.
"""

from __future__ import annotations

import hashlib
import json
import threading
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from rtleff.errors import ConfigMismatch


def config_hash(obj: Any) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Record:
    stage: str
    key: str
    payload: dict
    config_hash: str

    def to_line(self) -> str:
        return json.dumps(
            {"stage": self.stage, "key": self.key, "payload": self.payload, "config_hash": self.config_hash},
            sort_keys=True, separators=(",", ":"), ensure_ascii=False,
        )

    @classmethod
    def from_line(cls, line: str) -> Record:
        d = json.loads(line)
        return cls(d["stage"], d["key"], d["payload"], d["config_hash"])


def read_records(path: str | Path) -> list[Record]:
    """All complete records; a torn final line is ignored."""
    p = Path(path)
    if not p.exists():
        return []
    out: list[Record] = []
    lines = p.read_text(encoding="utf-8").split("\n")
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            out.append(Record.from_line(line))
        except (json.JSONDecodeError, KeyError, TypeError):
            if i >= len(lines) - 2:  # last non-empty line
                break
            raise
    return out


class RecordLog:
    """Thread-safe appender with an in-memory index by (stage, key)."""

    def __init__(self, path: str | Path, cfg_hash: str, *, resume: bool = True) -> None:
        self.path = Path(path)
        self.config_hash = cfg_hash
        self._lock = threading.Lock()
        self._index: dict[tuple[str, str], Record] = {}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists() and resume:
            self._trim_torn_tail()
            for r in read_records(self.path):
                if r.config_hash != cfg_hash:
                    raise ConfigMismatch(
                        f"{self.path} was written under config {r.config_hash}, current is {cfg_hash}"
                    )
                self._index[(r.stage, r.key)] = r
        elif self.path.exists():
            self.path.unlink()

    def _trim_torn_tail(self) -> None:
        data = self.path.read_bytes()
        if not data or data.endswith(b"\n"):
            return
        cut = data.rfind(b"\n") + 1
        tail = data[cut:]
        try:
            Record.from_line(tail.decode("utf-8"))
            self.path.write_bytes(data + b"\n")
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError):
            self.path.write_bytes(data[:cut])

    def get(self, stage: str, key: str) -> Record | None:
        return self._index.get((stage, key))

    def has(self, stage: str, key: str) -> bool:
        return (stage, key) in self._index

    def append(self, stage: str, key: str, payload: dict) -> Record:
        rec = Record(stage, key, payload, self.config_hash)
        line = rec.to_line() + "\n"
        with self._lock:
            if (stage, key) in self._index:
                return self._index[(stage, key)]
            with self.path.open("a", encoding="utf-8") as f:
                f.write(line)
                f.flush()
            self._index[(stage, key)] = rec
        return rec

    def records(self, stage: str | None = None) -> Iterator[Record]:
        for (s, _), r in self._index.items():
            if stage is None or s == stage:
                yield r

    def __len__(self) -> int:
        return len(self._index)
