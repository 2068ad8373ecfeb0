"""Append-only annotation event log.

Every state-changing action appends one event; project state is a pure fold
over the log, so replaying it (or any prefix) reconstructs a valid project.
Events are stored as JSON lines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

ACTIONS = frozenset(
    {
        "iteration_started",
        "cluster_approved",
        "cluster_flagged",
        "cluster_rejected",
        "page_verdict",
        "candidate_removed",
        "grow_committed",
        "tree_built",
        "node_merged",
        "node_moved",
        "node_named",
    }
)


@dataclass(frozen=True)
class AnnotationEvent:
    timestamp: float
    actor: str
    action: str
    payload: dict = field(default_factory=dict)
    objects_affected: int = 0

    def __post_init__(self) -> None:
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}")
        if self.objects_affected < 0:
            raise ValueError("objects_affected must be non-negative")

    def to_json(self) -> str:
        return json.dumps(
            {
                "timestamp": self.timestamp,
                "actor": self.actor,
                "action": self.action,
                "payload": self.payload,
                "objects_affected": self.objects_affected,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "AnnotationEvent":
        raw = json.loads(line)
        return cls(
            timestamp=float(raw["timestamp"]),
            actor=str(raw["actor"]),
            action=str(raw["action"]),
            payload=dict(raw.get("payload", {})),
            objects_affected=int(raw.get("objects_affected", 0)),
        )


class EventLog:
    """JSON-lines event log with non-decreasing timestamps.

    When ``path`` is None the log is memory-only (used by tests and
    replays); otherwise every append is written through immediately.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.events: list[AnnotationEvent] = []
        if self.path is not None and self.path.exists():
            with open(self.path, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if line:
                        self.events.append(AnnotationEvent.from_json(line))

    def append(self, event: AnnotationEvent) -> AnnotationEvent:
        if self.events and event.timestamp < self.events[-1].timestamp:
            event = AnnotationEvent(
                timestamp=self.events[-1].timestamp,
                actor=event.actor,
                action=event.action,
                payload=event.payload,
                objects_affected=event.objects_affected,
            )
        self.events.append(event)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(event.to_json() + "\n")
        return event

    def __iter__(self) -> Iterator[AnnotationEvent]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)
