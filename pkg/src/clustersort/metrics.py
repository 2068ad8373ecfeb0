"""Quality and throughput metrics over labelings and the annotation log.

Precision, macro precision, and relative overlap (Jaccard) follow the usual
set-counting definitions; throughput is accounted over sessions, maximal
event runs with no gap longer than ten minutes.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import UndefinedError
from .events import AnnotationEvent

SESSION_GAP_SECONDS = 600.0

# event actions whose objects_affected counts toward the headline
# validation+growing throughput; naming is accounted separately
THROUGHPUT_ACTIONS = frozenset(
    {"cluster_approved", "cluster_flagged", "cluster_rejected", "grow_committed"}
)
NAMING_ACTIONS = frozenset({"node_named"})


def precision(tp: int, fp: int) -> float:
    """tp / (tp + fp)."""
    if tp < 0 or fp < 0:
        raise ValueError("counts must be non-negative")
    if tp + fp == 0:
        raise UndefinedError("precision undefined for tp + fp = 0")
    return tp / (tp + fp)


def macro_precision(per_class: Mapping[str, float]) -> float:
    """Unweighted arithmetic mean of per-class precisions.

    Summation runs in sorted key order so the result does not depend on
    map insertion order.
    """
    if not per_class:
        raise UndefinedError("macro precision undefined for an empty class map")
    return sum(per_class[c] for c in sorted(per_class)) / len(per_class)


def precision_quantile(per_class: Mapping[str, float], q: float = 0.10) -> float:
    """Empirical q-quantile of the per-class precisions, linearly interpolated."""
    if not per_class:
        raise UndefinedError("quantile undefined for an empty class map")
    return float(np.quantile(sorted(per_class.values()), q, method="linear"))


def relative_overlap(a: Iterable[str], b: Iterable[str]) -> float:
    """Jaccard overlap |a n b| / |a u b|."""
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        raise UndefinedError("relative overlap undefined for two empty sets")
    return len(sa & sb) / len(union)


def _by_class(labeling: Mapping[str, str]) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for obj, cls in labeling.items():
        out.setdefault(cls, set()).add(obj)
    return out


@dataclass
class CorrespondenceMatrix:
    """Relative overlap between class pairs of two labelings.

    Only pairs with a nonzero intersection are present.  ``order_a`` sorts
    the first labeling's classes by descending correspondence count, the
    layout used for correspondence heatmaps.
    """

    entries: dict[tuple[str, str], float]
    order_a: list[str]
    order_b: list[str]

    def value(self, class_a: str, class_b: str) -> float:
        return self.entries.get((class_a, class_b), 0.0)


def correspondence_matrix(
    labeling_a: Mapping[str, str], labeling_b: Mapping[str, str]
) -> CorrespondenceMatrix:
    """Overlap structure between two labelings of overlapping object sets."""
    common = set(labeling_a) & set(labeling_b)
    by_a = _by_class({o: labeling_a[o] for o in common})
    by_b = _by_class({o: labeling_b[o] for o in common})
    entries: dict[tuple[str, str], float] = {}
    for ca, objs_a in by_a.items():
        for cb, objs_b in by_b.items():
            inter = objs_a & objs_b
            if inter:
                entries[(ca, cb)] = len(inter) / len(objs_a | objs_b)
    counts_a = {ca: 0 for ca in by_a}
    counts_b = {cb: 0 for cb in by_b}
    for ca, cb in entries:
        counts_a[ca] += 1
        counts_b[cb] += 1
    order_a = sorted(by_a, key=lambda c: (counts_a[c], c))
    # second labeling ordered by its best-corresponding first-labeling class
    best_a = {
        cb: max(
            (v, ca) for (ca, cb2), v in entries.items() if cb2 == cb
        )[1]
        for cb in counts_b
        if counts_b[cb]
    }
    rank_a = {c: i for i, c in enumerate(order_a)}
    order_b = sorted(
        by_b, key=lambda c: (rank_a.get(best_a.get(c, ""), -1), c)
    )
    return CorrespondenceMatrix(entries=entries, order_a=order_a, order_b=order_b)


@dataclass
class AgreementReport:
    """Predominant-label agreement of a labeling against spiked ground truth."""

    macro: float
    per_class: dict[str, float]
    predominant: dict[str, str]
    excluded: list[str]


def predominant_label_agreement(
    labeling: Mapping[str, str], spiked_truth: Mapping[str, str]
) -> AgreementReport:
    """Assign every class its majority truth label; precision against it.

    Classes with no spiked member cannot be scored; they are excluded and
    reported.  Majority ties break on the lexicographically smallest label.
    """
    by_class = _by_class(dict(labeling))
    per_class: dict[str, float] = {}
    predominant: dict[str, str] = {}
    excluded: list[str] = []
    for cls in sorted(by_class):
        spiked = [spiked_truth[o] for o in by_class[cls] if o in spiked_truth]
        if not spiked:
            excluded.append(cls)
            continue
        counts: dict[str, int] = {}
        for label in spiked:
            counts[label] = counts.get(label, 0) + 1
        top = max(counts.values())
        majority = min(lbl for lbl, c in counts.items() if c == top)
        predominant[cls] = majority
        per_class[cls] = counts[majority] / len(spiked)
    if not per_class:
        raise UndefinedError("no class has spiked members")
    return AgreementReport(
        macro=macro_precision(per_class),
        per_class=per_class,
        predominant=predominant,
        excluded=excluded,
    )


@dataclass
class Session:
    """Maximal run of events with no internal gap above ten minutes."""

    events: list[AnnotationEvent]

    @property
    def duration(self) -> float:
        return self.events[-1].timestamp - self.events[0].timestamp


def segment_sessions(events: Sequence[AnnotationEvent]) -> list[Session]:
    """Split a time-ordered event sequence at gaps strictly longer than 600 s."""
    sessions: list[Session] = []
    current: list[AnnotationEvent] = []
    for ev in events:
        if current and ev.timestamp - current[-1].timestamp > SESSION_GAP_SECONDS:
            sessions.append(Session(events=current))
            current = []
        current.append(ev)
    if current:
        sessions.append(Session(events=current))
    return sessions


@dataclass
class ThroughputReport:
    objects_per_hour: float
    naming_objects_per_hour: float | None
    total_objects: int
    total_hours: float
    per_iteration: list[dict]


def throughput(events: Sequence[AnnotationEvent]) -> ThroughputReport:
    """Objects sorted per hour over validation+growing events.

    The headline figure divides the objects affected by approval and growth
    events by the summed session durations.  Naming work is reported as a
    separate rate over the same session time.  A per-iteration breakdown is
    keyed by iteration_started markers.
    """
    if not events:
        raise UndefinedError("no events")
    sessions = segment_sessions(events)
    total_hours = sum(s.duration for s in sessions) / 3600.0
    if total_hours == 0.0:
        raise UndefinedError("zero total session duration")
    sorted_objects = sum(
        ev.objects_affected for ev in events if ev.action in THROUGHPUT_ACTIONS
    )
    named_objects = sum(
        ev.objects_affected for ev in events if ev.action in NAMING_ACTIONS
    )

    per_iteration: list[dict] = []
    current: dict | None = None
    bucket: list[AnnotationEvent] = []

    def flush() -> None:
        if current is None:
            return
        hours = sum(s.duration for s in segment_sessions(bucket)) / 3600.0
        objs = sum(
            ev.objects_affected for ev in bucket if ev.action in THROUGHPUT_ACTIONS
        )
        current["objects"] = objs
        current["hours"] = hours
        current["objects_per_hour"] = objs / hours if hours > 0 else None
        per_iteration.append(current)

    for ev in events:
        if ev.action == "iteration_started":
            flush()
            current = {
                "iteration": ev.payload.get("iteration"),
                "m": ev.payload.get("m"),
                "new_clusters": len(ev.payload.get("seeds", [])),
            }
            bucket = [ev]
        elif current is not None:
            bucket.append(ev)
    flush()

    return ThroughputReport(
        objects_per_hour=sorted_objects / total_hours,
        naming_objects_per_hour=(named_objects / total_hours) if named_objects else None,
        total_objects=sorted_objects,
        total_hours=total_hours,
        per_iteration=per_iteration,
    )


def review_sample(
    labeling: Mapping[str, str], per_class_cap: int, seed: int
) -> dict[str, list[str]]:
    """Seeded per-class random samples for manual precision review."""
    rng = random.Random(seed)
    out: dict[str, list[str]] = {}
    for cls, objs in sorted(_by_class(dict(labeling)).items()):
        pool = sorted(objs)
        if len(pool) > per_class_cap:
            pool = rng.sample(pool, per_class_cap)
        out[cls] = sorted(pool)
    return out
