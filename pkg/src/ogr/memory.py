"""Append-only run memory: dialogues, derived artifacts, metrics and clips.

One JSON object per line.  The first line is a header naming the format and
version plus run metadata; every later line is a record with a contiguous id.
Clip frames live in a sidecar ``clips/`` directory keyed by content hash.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

FORMAT = "ogr-memory"
VERSION = 1


class StorageFailure(OSError):
    pass


class Kind(str, Enum):
    DIALOGUE = "Dialogue"
    STAGE_PLAN = "StagePlan"
    ANALYSIS = "AnalysisReport"
    REWARD_PROGRAM = "RewardProgram"
    CURRICULUM_SPEC = "CurriculumSpec"
    TEST_REPORT = "TestReport"
    SCORE = "Score"
    CLIP = "Clip"
    PROPOSAL = "Proposal"
    CHECKPOINT = "Checkpoint-ref"
    REGISTRY = "Registry"
    EVALUATION = "Evaluation"
    SELECTION = "Selection"
    STAGE_SUMMARY = "StageSummary"


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


@dataclass(frozen=True)
class MemoryRecord:
    id: int
    stage: int
    kind: Kind
    payload: str
    branch: int | None = None
    role: str | None = None
    derived_from: int | None = None
    fallback_of: int | None = None
    ts: float = 0.0

    def to_line(self) -> str:
        return canonical({
            "id": self.id, "stage": self.stage, "kind": self.kind.value, "payload": self.payload,
            "branch": self.branch, "role": self.role, "derived_from": self.derived_from,
            "fallback_of": self.fallback_of, "ts": self.ts,
        })

    @classmethod
    def from_line(cls, line: str) -> "MemoryRecord":
        d = json.loads(line)
        return cls(d["id"], d["stage"], Kind(d["kind"]), d["payload"], d["branch"], d["role"],
                   d["derived_from"], d["fallback_of"], d["ts"])

    def data(self):
        """Payload decoded from JSON (reward programs are stored as plain source)."""
        return self.payload if self.kind is Kind.REWARD_PROGRAM else json.loads(self.payload)


class Memory:
    """Single-writer append-only log.  Appends are serialized by a lock and fsynced."""

    def __init__(self, path, meta: dict | None = None):
        self.path = Path(path)
        self.clip_dir = self.path.parent / "clips"
        self._lock = threading.Lock()
        self.records: list[MemoryRecord] = []
        if self.path.exists() and self.path.stat().st_size:
            self.meta = self._load()
        else:
            self.meta = dict(meta or {})
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._write(canonical({"format": FORMAT, "version": VERSION, "meta": self.meta}))

    def _load(self) -> dict:
        with self.path.open(encoding="utf-8") as f:
            header = json.loads(f.readline())
            if header.get("format") != FORMAT or header.get("version") != VERSION:
                raise StorageFailure(f"{self.path}: not an {FORMAT} v{VERSION} log")
            for line in f:
                if line.strip():
                    self.records.append(MemoryRecord.from_line(line))
        return header["meta"]

    def _write(self, line: str):
        try:
            with self.path.open("a", encoding="utf-8") as f:
                f.write(line + "\n")
                f.flush()
                os.fsync(f.fileno())
        except OSError as e:
            raise StorageFailure(str(e)) from e

    def append(self, stage: int, kind: Kind, payload, branch=None, role=None, derived_from=None,
               fallback_of=None) -> int:
        if not isinstance(payload, str):
            payload = canonical(payload)
        with self._lock:
            rid = len(self.records) + 1
            rec = MemoryRecord(rid, stage, Kind(kind), payload, branch, role, derived_from, fallback_of,
                               round(time.time(), 6))
            self._write(rec.to_line())
            self.records.append(rec)
        return rid

    def get(self, rid: int) -> MemoryRecord:
        return self.records[rid - 1]

    def history(self, role, stage: int) -> list[MemoryRecord]:
        """Dialogue records for ``role`` from the previous stage, in append order."""
        if stage < 2:
            raise ValueError("history is defined from stage 2 on")
        role = getattr(role, "value", role)
        return [r for r in self.records if r.kind is Kind.DIALOGUE and r.role == role and r.stage == stage - 1]

    def select(self, kind: Kind | None = None, stage: int | None = None, branch=None) -> list[MemoryRecord]:
        return [r for r in self.records
                if (kind is None or r.kind is kind) and (stage is None or r.stage == stage)
                and (branch is None or r.branch == branch)]

    def put_clip(self, frames: list) -> str:
        """Store bulky frames in the sidecar directory; returns their content hash."""
        body = canonical(frames).encode()
        digest = hashlib.sha256(body).hexdigest()
        self.clip_dir.mkdir(parents=True, exist_ok=True)
        target = self.clip_dir / f"{digest}.json"
        if not target.exists():
            tmp = target.with_suffix(".tmp")
            tmp.write_bytes(body)
            os.replace(tmp, target)
        return digest

    def get_clip(self, digest: str) -> list:
        return json.loads((self.clip_dir / f"{digest}.json").read_bytes())

    def clip_bytes(self, digest: str) -> bytes:
        return (self.clip_dir / f"{digest}.json").read_bytes()


def read(path) -> Memory:
    """Open an existing log read-only in spirit (no header is written)."""
    if not Path(path).exists():
        raise FileNotFoundError(path)
    return Memory(path)
