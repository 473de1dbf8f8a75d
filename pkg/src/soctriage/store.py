"""Append-only store of triage experiences.

One experience is a coherent triage episode: the ordered filter operations
an analyst ran, a context snapshot of the triggering step, and the outcome
label. The store is a line-oriented file (version header line, then one
JSON record per line, same value encoding as the event wire format).

Concurrency: single exclusive writer per store file; readers of any
snapshot see a consistent prefix. A partially written trailing record is
skipped on load; corruption before the tail fails loudly.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from enum import Enum

from .errors import BadValue, DuplicateId, StorageFailure
from .dsl import Criteria, FilterOp, OpKind, format_criteria, parse_criteria

STORE_HEADER = {"format": "soctriage-experience-store", "version": 1}


class Outcome(str, Enum):
    ESCALATED = "ESCALATED"
    BENIGN = "BENIGN"
    UNRESOLVED = "UNRESOLVED"


@dataclass(frozen=True)
class StepRecord:
    """One executed filter op plus a summary of what it matched."""

    op: FilterOp
    matched_count: int
    sample_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if self.matched_count < 0:
            raise BadValue("matched_count must be >= 0")


@dataclass(frozen=True)
class ContextSnapshot:
    """Criteria and time window of the step that anchors retrieval."""

    criteria: Criteria
    window_start: int
    window_end: int
    trigger_step: int = 0

    def __post_init__(self):
        if self.window_end < self.window_start:
            raise BadValue("window_end before window_start")
        if self.trigger_step < 0:
            raise BadValue("trigger_step must be >= 0")


@dataclass(frozen=True)
class Experience:
    analyst: str
    steps: tuple[StepRecord, ...]
    snapshot: ContextSnapshot
    outcome: Outcome
    recorded_at: int
    id: int | None = None

    def __post_init__(self):
        if not self.steps:
            raise BadValue("experience needs at least one step")
        times = [s.op.created_at for s in self.steps]
        if any(b < a for a, b in zip(times, times[1:])):
            raise BadValue("step timestamps must be non-decreasing")
        if self.snapshot.trigger_step >= len(self.steps):
            raise BadValue("trigger_step beyond last step")
        if not isinstance(self.outcome, Outcome):
            raise BadValue(f"bad outcome {self.outcome!r}")

    def suggested_next_op(self) -> FilterOp | None:
        """Successor of the triggering step, absent when it is the last."""
        nxt = self.snapshot.trigger_step + 1
        return self.steps[nxt].op if nxt < len(self.steps) else None


# -- json encoding ------------------------------------------------------------

def op_to_json(op: FilterOp) -> dict:
    return {
        "kind": op.kind.value,
        "criteria": format_criteria(op.criteria),
        "correlate_key": list(op.correlate_key) if op.correlate_key else None,
        "op_id": op.op_id,
        "created_at": op.created_at,
    }


def op_from_json(obj: dict) -> FilterOp:
    return FilterOp(
        kind=OpKind(obj["kind"]),
        criteria=parse_criteria(obj["criteria"]),
        correlate_key=tuple(obj["correlate_key"]) if obj.get("correlate_key") else None,
        op_id=obj.get("op_id", ""),
        created_at=obj.get("created_at", 0),
    )


def experience_to_json(exp: Experience) -> dict:
    return {
        "id": exp.id,
        "analyst": exp.analyst,
        "steps": [{"op": op_to_json(s.op),
                   "matched_count": s.matched_count,
                   "sample_ids": list(s.sample_ids)} for s in exp.steps],
        "snapshot": {
            "criteria": format_criteria(exp.snapshot.criteria),
            "window_start": exp.snapshot.window_start,
            "window_end": exp.snapshot.window_end,
            "trigger_step": exp.snapshot.trigger_step,
        },
        "outcome": exp.outcome.value,
        "recorded_at": exp.recorded_at,
    }


def experience_from_json(obj: dict) -> Experience:
    try:
        snap = obj["snapshot"]
        return Experience(
            analyst=obj["analyst"],
            steps=tuple(StepRecord(op_from_json(s["op"]), s["matched_count"],
                                   tuple(s.get("sample_ids", ())))
                        for s in obj["steps"]),
            snapshot=ContextSnapshot(parse_criteria(snap["criteria"]),
                                     snap["window_start"], snap["window_end"],
                                     snap.get("trigger_step", 0)),
            outcome=Outcome(obj["outcome"]),
            recorded_at=obj["recorded_at"],
            id=obj.get("id"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BadValue(f"bad experience record: {exc}") from None


class ExperienceStore:
    """File-backed append-only experience log."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._entries: list[Experience] = []
        self._load()

    def _load(self) -> None:
        if not os.path.exists(self.path):
            try:
                with open(self.path, "w", encoding="utf-8") as fh:
                    fh.write(json.dumps(STORE_HEADER) + "\n")
            except OSError as exc:
                raise StorageFailure(f"cannot create store: {exc}") from None
            return
        try:
            with open(self.path, encoding="utf-8") as fh:
                raw = fh.read()
        except OSError as exc:
            raise StorageFailure(f"cannot read store: {exc}") from None
        if not raw:
            raise StorageFailure("store file is empty (missing header)")
        complete = raw.endswith("\n")
        lines = raw.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        try:
            header = json.loads(lines[0])
        except (json.JSONDecodeError, IndexError):
            raise StorageFailure("store header unreadable") from None
        if header.get("format") != STORE_HEADER["format"]:
            raise StorageFailure(f"not an experience store: {self.path}")
        for n, line in enumerate(lines[1:], start=2):
            last = n == len(lines)
            if last and not complete:
                break  # unterminated tail: the append was interrupted
            try:
                self._entries.append(experience_from_json(json.loads(line)))
            except (json.JSONDecodeError, BadValue) as exc:
                if last:
                    break  # torn tail record
                raise StorageFailure(f"corrupt record at line {n}: {exc}") from None

    def record(self, exp: Experience) -> int:
        """Durably append; returns the assigned (strictly increasing) id."""
        with self._lock:
            last = self._entries[-1].id if self._entries else 0
            if exp.id is None:
                exp = Experience(exp.analyst, exp.steps, exp.snapshot,
                                 exp.outcome, exp.recorded_at, last + 1)
            elif exp.id <= last:
                raise DuplicateId(f"id {exp.id} does not extend the sequence "
                                  f"(last is {last})")
            line = json.dumps(experience_to_json(exp),
                              separators=(", ", ": "), ensure_ascii=False)
            try:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            except OSError as exc:
                raise StorageFailure(f"append failed: {exc}") from None
            self._entries.append(exp)
            return exp.id

    def all(self) -> list[Experience]:
        with self._lock:
            return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def query(self, outcome: Outcome | None = None, analyst: str | None = None,
              since: int | None = None, until: int | None = None) -> list[Experience]:
        """Matching experiences, most recent first."""
        out = [e for e in self.all()
               if (outcome is None or e.outcome is outcome)
               and (analyst is None or e.analyst == analyst)
               and (since is None or e.recorded_at >= since)
               and (until is None or e.recorded_at <= until)]
        out.sort(key=lambda e: (-e.recorded_at, -(e.id or 0)))
        return out
