import numpy as np
import pytest

from clustersort.errors import UndefinedError
from clustersort.events import AnnotationEvent
from clustersort.metrics import (
    correspondence_matrix,
    macro_precision,
    precision,
    precision_quantile,
    predominant_label_agreement,
    relative_overlap,
    review_sample,
    segment_sessions,
    throughput,
)


def ev(ts, action="cluster_approved", affected=0, payload=None):
    return AnnotationEvent(
        timestamp=float(ts),
        actor="t",
        action=action,
        payload=payload or {},
        objects_affected=affected,
    )


# -- precision ---------------------------------------------------------------


def test_precision_direct():
    assert precision(9, 1) == 0.9
    assert precision(0, 5) == 0.0
    assert precision(5, 0) == 1.0
    with pytest.raises(UndefinedError):
        precision(0, 0)


def test_macro_precision():
    assert macro_precision({"a": 1.0, "b": 0.5}) == 0.75
    assert macro_precision({"only": 0.3}) == 0.3
    with pytest.raises(UndefinedError):
        macro_precision({})


def test_macro_precision_vs_sum_oracle():
    rng = np.random.default_rng(5)
    per_class = {f"c{i}": float(rng.uniform()) for i in range(65)}
    naive = sum(per_class.values()) / 65
    assert abs(macro_precision(per_class) - naive) < 1e-12


def test_macro_precision_relabel_invariant():
    rng = np.random.default_rng(6)
    values = [float(rng.uniform()) for _ in range(30)]
    a = {f"c{i}": v for i, v in enumerate(values)}
    b = {f"renamed-{i}": v for i, v in enumerate(values)}
    assert macro_precision(a) == macro_precision(b)


def test_precision_quantile_interpolated():
    per_class = {f"c{i}": v for i, v in enumerate([0.0, 0.25, 0.5, 0.75, 1.0])}
    assert precision_quantile(per_class, 0.5) == 0.5
    assert precision_quantile(per_class, 0.10) == pytest.approx(0.1)


# -- relative overlap ---------------------------------------------------------------


def test_relative_overlap_values():
    assert relative_overlap({"a", "b"}, {"a", "b"}) == 1.0
    assert relative_overlap({"a"}, {"b"}) == 0.0
    a = {f"x{i}" for i in range(10)}
    b = {f"x{i}" for i in range(5)} | {f"y{i}" for i in range(10)}
    assert relative_overlap(a, b) == 5 / 20
    with pytest.raises(UndefinedError):
        relative_overlap(set(), set())


def test_relative_overlap_axioms():
    rng = np.random.default_rng(7)
    universe = [f"u{i}" for i in range(30)]
    for _ in range(100):
        a = {u for u in universe if rng.random() < 0.4}
        b = {u for u in universe if rng.random() < 0.4}
        if not (a | b):
            continue
        v = relative_overlap(a, b)
        assert 0.0 <= v <= 1.0
        assert v == relative_overlap(b, a)
    assert relative_overlap({"z"}, {"z"}) == 1.0


# -- correspondence ---------------------------------------------------------------


def test_correspondence_identity():
    labeling = {f"o{i}": f"c{i % 3}" for i in range(30)}
    mat = correspondence_matrix(labeling, labeling)
    for ca in ("c0", "c1", "c2"):
        for cb in ("c0", "c1", "c2"):
            assert mat.value(ca, cb) == (1.0 if ca == cb else 0.0)
    assert all(v > 0 for v in mat.entries.values())


def test_correspondence_split_class():
    labeling_a = {f"o{i}": "whole" for i in range(10)}
    labeling_b = {f"o{i}": ("left" if i < 5 else "right") for i in range(10)}
    mat = correspondence_matrix(labeling_a, labeling_b)
    assert mat.value("whole", "left") == 5 / 10
    assert mat.value("whole", "right") == 5 / 10
    assert ("whole", "nothere") not in mat.entries


def test_correspondence_restricted_to_common_objects():
    labeling_a = {"x": "a", "y": "a", "zonly": "a"}
    labeling_b = {"x": "b", "y": "c", "wonly": "b"}
    mat = correspondence_matrix(labeling_a, labeling_b)
    assert mat.value("a", "b") == 1 / 2
    assert mat.value("a", "c") == 1 / 2


# -- predominant label agreement ---------------------------------------------------


def test_predominant_majority_two_thirds():
    labeling = {"o1": "mc1", "o2": "mc1", "o3": "mc1"}
    truth = {"o1": "A", "o2": "A", "o3": "B"}
    report = predominant_label_agreement(labeling, truth)
    assert report.predominant["mc1"] == "A"
    assert report.per_class["mc1"] == pytest.approx(2 / 3)


def test_predominant_all_pure():
    labeling = {f"o{i}": f"mc{i % 4}" for i in range(40)}
    truth = {f"o{i}": f"t{i % 4}" for i in range(40)}
    report = predominant_label_agreement(labeling, truth)
    assert report.macro == 1.0


def test_predominant_excludes_unspiked():
    labeling = {"o1": "mc1", "o2": "mc2"}
    truth = {"o1": "A"}
    report = predominant_label_agreement(labeling, truth)
    assert report.excluded == ["mc2"]
    assert report.per_class == {"mc1": 1.0}


def test_predominant_tie_breaks_lexicographic():
    labeling = {"o1": "mc", "o2": "mc"}
    truth = {"o1": "B", "o2": "A"}
    report = predominant_label_agreement(labeling, truth)
    assert report.predominant["mc"] == "A"


def brute_agreement(labeling, truth):
    classes = {}
    for obj, cls in labeling.items():
        classes.setdefault(cls, []).append(obj)
    scores = {}
    for cls, objs in classes.items():
        spiked = [truth[o] for o in objs if o in truth]
        if not spiked:
            continue
        best = None
        for cand in sorted(set(spiked)):
            hits = sum(1 for s in spiked if s == cand)
            if best is None or hits > best[0]:
                best = (hits, cand)
        scores[cls] = best[0] / len(spiked)
    macro = sum(scores[c] for c in sorted(scores)) / len(scores)
    return macro, scores


def test_predominant_vs_brute_counting():
    rng = np.random.default_rng(9)
    for _ in range(50):
        n = int(rng.integers(5, 200))
        labeling = {f"o{i}": f"mc{rng.integers(0, 8)}" for i in range(n)}
        truth = {
            f"o{i}": f"t{rng.integers(0, 5)}"
            for i in range(n)
            if rng.random() < 0.7
        }
        if not (set(labeling) & set(truth)):
            continue
        report = predominant_label_agreement(labeling, truth)
        macro, scores = brute_agreement(labeling, truth)
        assert report.per_class == scores
        assert report.macro == macro


# -- sessions and throughput ---------------------------------------------------------


def test_segment_sessions_rule():
    events = [ev(0), ev(300), ev(1200)]
    sessions = segment_sessions(events)
    assert [len(s.events) for s in sessions] == [2, 1]
    assert sessions[0].duration == 300
    assert sessions[1].duration == 0


def test_segment_single_event():
    sessions = segment_sessions([ev(42)])
    assert len(sessions) == 1
    assert sessions[0].duration == 0


def test_segment_gap_exactly_600_same_session():
    sessions = segment_sessions([ev(0), ev(600)])
    assert len(sessions) == 1


def test_segment_concatenation_reproduces_log():
    rng = np.random.default_rng(11)
    t = 0.0
    events = []
    for _ in range(200):
        t += float(rng.choice([1, 30, 300, 601, 1500]))
        events.append(ev(t))
    sessions = segment_sessions(events)
    flat = [e for s in sessions for e in s.events]
    assert flat == events
    for a, b in zip(sessions, sessions[1:]):
        assert b.events[0].timestamp - a.events[-1].timestamp > 600


def test_throughput_worked_examples():
    events = [
        ev(0, "iteration_started", payload={"iteration": 1, "m": 128, "seeds": []}),
        ev(10, "cluster_approved", affected=400),
        ev(360, "grow_committed", affected=600),
    ]
    report = throughput(events)
    assert report.objects_per_hour == pytest.approx(1000 / (360 / 3600.0))

    # two half-hour sessions (gap 8200 s between them), 5000 + 15000 objects
    events = [
        ev(0, "cluster_approved", affected=2000),
        ev(600, "cluster_approved", affected=1500),
        ev(1200, "grow_committed", affected=1000),
        ev(1800, "grow_committed", affected=500),
        ev(10000, "cluster_approved", affected=5000),
        ev(10600, "grow_committed", affected=4000),
        ev(11200, "grow_committed", affected=3000),
        ev(11800, "grow_committed", affected=3000),
    ]
    report = throughput(events)
    assert report.total_hours == pytest.approx(1.0)
    assert report.objects_per_hour == pytest.approx(20000.0)


def test_throughput_excludes_naming_from_headline():
    events = [
        ev(0, "cluster_approved", affected=100),
        ev(360, "node_named", affected=5000),
    ]
    report = throughput(events)
    assert report.objects_per_hour == pytest.approx(1000.0)
    assert report.naming_objects_per_hour == pytest.approx(50000.0)


def test_throughput_zero_duration_undefined():
    with pytest.raises(UndefinedError):
        throughput([ev(5, "cluster_approved", affected=10)])


def test_throughput_rewrite_invariance():
    events_a = [
        ev(0, "cluster_approved", affected=500),
        ev(100, "grow_committed", affected=500),
    ]
    events_b = [
        ev(0, "cluster_rejected", affected=250),
        ev(50, "cluster_approved", affected=250),
        ev(100, "grow_committed", affected=500),
    ]
    assert throughput(events_a).objects_per_hour == throughput(events_b).objects_per_hour


def test_review_sample_seeded():
    labeling = {f"o{i}": f"c{i % 3}" for i in range(100)}
    s1 = review_sample(labeling, per_class_cap=10, seed=7)
    s2 = review_sample(labeling, per_class_cap=10, seed=7)
    assert s1 == s2
    assert all(len(v) == 10 for v in s1.values())
    s3 = review_sample(labeling, per_class_cap=500, seed=7)
    assert all(len(v) in (33, 34) for v in s3.values())
