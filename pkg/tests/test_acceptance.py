"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as the
criteria complete.  The end-to-end scenario (criteria 5, 6, and 8 share one
simulated 50k run) takes a couple of minutes.
"""

import itertools
import math
import time

import numpy as np
import pytest
from scipy import stats

from clustersort.clustering import ClusteringParams, build_mst, cluster_unassigned
from clustersort.errors import UndefinedError
from clustersort.hierarchy import build_upgma
from clustersort.lifecycle import BoundarySearch, ClusterStatus
from clustersort.metrics import (
    macro_precision,
    precision,
    predominant_label_agreement,
    relative_overlap,
    segment_sessions,
    throughput,
)
from clustersort.events import AnnotationEvent
from clustersort.oracle import OraclePolicy, oracle_annotate
from clustersort.project import Project
from clustersort.store import FeatureStore
from clustersort.synthetic import SyntheticSpec, class_name, generate_synthetic, write_dataset

from oracle_hdbscan import brute_hdbscan, kruskal_mst, mreach_matrix, distance_matrix
from test_clustering import all_spanning_tree_weights
from test_hierarchy import merge_sequence, naive_upgma


def ok(line: str) -> None:
    print(f"\nACCEPTANCE PASS: {line}")


def store_from(pts):
    pts = np.asarray(pts, dtype=np.float32)
    if pts.ndim == 1:
        pts = pts[:, None]
    ids = [f"p{i:04d}" for i in range(len(pts))]
    return FeatureStore(pts.shape[1], ids, pts), ids


# -- criterion 1: clustering oracle equivalence ---------------------------------


def test_clustering_oracle_equivalence_200_instances():
    rng = np.random.default_rng(2024)
    started = time.time()
    for trial in range(200):
        dim = int(rng.choice([2, 8, 32]))
        m = int(rng.choice([4, 8, 16]))
        n = int(rng.integers(m + 1, 201))
        kind = trial % 3
        if kind == 0:
            pts = rng.standard_normal((n, dim))
        elif kind == 1:
            centers = rng.standard_normal((4, dim)) * 5.0
            pts = np.vstack(
                [rng.normal(0, 0.4, size=(n // 4 + 1, dim)) + c for c in centers]
            )[:n]
        else:
            pts = rng.uniform(-1, 1, size=(n, dim))
        store, ids = store_from(pts)
        seed_set = cluster_unassigned(store, ids, ClusteringParams(k=1, m=m))
        index = {oid: i for i, oid in enumerate(ids)}
        got_seeds = {
            frozenset(index[o] for o in members) for _, members in seed_set.seeds
        }
        got_noise = frozenset(index[o] for o in seed_set.noise)
        want_seeds, want_noise = brute_hdbscan(
            store.matrix().astype(np.float64), m, 1
        )
        assert got_seeds == want_seeds, f"trial {trial}: partitions differ"
        assert got_noise == want_noise, f"trial {trial}: noise differs"
    elapsed = time.time() - started
    assert elapsed < 60.0, f"took {elapsed:.1f}s, budget 60s"
    ok(
        "clustering equals brute-force HDBSCAN* on 200 random instances "
        f"(exact partitions, {elapsed:.1f}s < 60s)"
    )


# -- criterion 2: MST optimality ---------------------------------------------------


def mst_certificate_optimal(edges, weights):
    """Exact MST check: every tree edge is a minimum-weight crossing edge
    of its fundamental cut."""
    n = weights.shape[0]
    adjacency = {i: set() for i in range(n)}
    for a, b, _ in edges:
        adjacency[a].add(b)
        adjacency[b].add(a)
    for a, b, w in edges:
        # component of a with edge (a, b) removed
        comp = {a}
        stack = [a]
        while stack:
            x = stack.pop()
            for y in adjacency[x]:
                if (x, y) in ((a, b), (b, a)):
                    continue
                if y not in comp:
                    comp.add(y)
                    stack.append(y)
        other = set(range(n)) - comp
        crossing_min = min(weights[i, j] for i in comp for j in other)
        if w > crossing_min + 1e-12:
            return False
    return True


def test_mst_optimality():
    rng = np.random.default_rng(77)
    # n <= 8: literal exhaustive enumeration of every spanning tree
    for n in range(2, 9):
        pts = rng.standard_normal((n, 3))
        store, ids = store_from(pts)
        edges = build_mst(store, set(ids), 1)
        total = sum(w for _, _, w in edges)
        weights = mreach_matrix(distance_matrix(store.matrix().astype(np.float64)), 1)
        if n >= 3:
            best = min(all_spanning_tree_weights(weights))
        else:
            best = float(weights[0, 1])
        assert total == pytest.approx(best, abs=1e-12)
    # 9 <= n <= 12: enumeration is infeasible (n^(n-2) trees); use the exact
    # fundamental-cut optimality certificate plus an independent Kruskal
    for n in range(9, 13):
        pts = rng.standard_normal((n, 3))
        store, ids = store_from(pts)
        edges = build_mst(store, set(ids), 1)
        index = {oid: i for i, oid in enumerate(ids)}
        iedges = [(index[a], index[b], w) for a, b, w in edges]
        weights = mreach_matrix(distance_matrix(store.matrix().astype(np.float64)), 1)
        assert mst_certificate_optimal(iedges, weights)
        total = sum(w for _, _, w in edges)
        expected = sum(w for _, _, w in kruskal_mst(weights))
        assert total == pytest.approx(expected, abs=1e-12)
    # n = 500 against independent Kruskal within 1e-9
    pts = rng.standard_normal((500, 8))
    store, ids = store_from(pts)
    edges = build_mst(store, set(ids), 1)
    total = sum(w for _, _, w in edges)
    weights = mreach_matrix(distance_matrix(store.matrix().astype(np.float64)), 1)
    expected = sum(w for _, _, w in kruskal_mst(weights))
    assert total == pytest.approx(expected, abs=1e-9)
    ok(
        "MST optimal: exhaustive enumeration n<=8, exact cut certificate + "
        "Kruskal n<=12, Kruskal n=500 within 1e-9"
    )


# -- criterion 3: search-trace exactness ---------------------------------------------


def test_search_trace_exactness():
    search = BoundarySearch(100)
    trace = []
    while (page := search.pending()) is not None:
        verdict = page <= 37
        trace.append(page)
        search.record(page, verdict)
    assert trace == [0, 1, 3, 7, 15, 31, 63, 47, 39, 35, 37, 38]
    assert len(trace) == 12
    assert search.threshold == 37

    checked = 0
    for page_count in range(1, 257):
        bound = 2 * math.ceil(math.log2(page_count + 1)) + 2
        for boundary in itertools.chain([None], range(page_count)):
            search = BoundarySearch(page_count)
            while (page := search.pending()) is not None:
                search.record(page, boundary is not None and page <= boundary)
            assert search.threshold == boundary
            assert len(search.judged) <= bound
            checked += 1
    rng = np.random.default_rng(3)
    for _ in range(500):
        page_count = int(rng.integers(257, 2**16 + 1))
        boundary = int(rng.integers(-1, page_count))
        boundary = None if boundary < 0 else boundary
        bound = 2 * math.ceil(math.log2(page_count + 1)) + 2
        search = BoundarySearch(page_count)
        while (page := search.pending()) is not None:
            search.record(page, boundary is not None and page <= boundary)
        assert search.threshold == boundary
        assert len(search.judged) <= bound
    ok(
        f"gallop+binary exact on all (P<=256, t) pairs ({checked} cases, "
        "probe bound 2*ceil(log2(P+1))+2) and 500 random P<=65536; "
        "worked trace reproduces 12 judgments"
    )


# -- criterion 4: UPGMA oracle equivalence ----------------------------------------


def test_upgma_oracle_equivalence_100_instances():
    rng = np.random.default_rng(505)
    for trial in range(100):
        k = int(rng.integers(2, 51))
        dim = int(rng.choice([2, 8, 32]))
        centroids = {f"c{i:02d}": rng.standard_normal(dim) for i in range(k)}
        tree = build_upgma(centroids)
        got = merge_sequence(tree)
        want = naive_upgma(centroids)
        assert len(got) == len(want)
        for (h1, a1, b1), (h2, a2, b2) in zip(got, want):
            assert {a1, b1} == {a2, b2}, f"trial {trial}: merge partners differ"
            assert h1 == pytest.approx(h2, rel=1e-9)

    tree = build_upgma(
        {
            "a": np.array([0.0]),
            "b": np.array([1.0]),
            "c": np.array([5.0]),
            "d": np.array([6.0]),
        }
    )
    heights = sorted(n.merge_height for n in tree.nodes.values() if n.children)
    assert heights == [1.0, 1.0, 5.0]
    ok(
        "UPGMA merge sequences match the naive O(n^3) oracle on 100 random "
        "centroid sets; 1-D {0,1,5,6} dendrogram heights are (1, 1, 5)"
    )


# -- criteria 5, 6, 8: end-to-end synthetic reproduction ---------------------------


HOLDOUT = class_name(6)  # ~0.5% of the objects at this size layout


@pytest.fixture(scope="module")
def endtoend(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("endtoend")
    spec = SyntheticSpec(
        class_count=20,
        total=50_000,
        zipf_exponent=2.5,
        dim=32,
        cluster_sigma=0.1,
        noise_fraction=0.02,
        holdout_classes=frozenset({HOLDOUT}),
        rng_seed=20250809,
    )
    dataset = generate_synthetic(spec)
    features = tmp / "features.mcft"
    labels = tmp / "labels.csv"
    write_dataset(dataset, features, labels)
    counter = iter(range(1, 1 << 50))
    project = Project.create(
        tmp / "project",
        features,
        schedule=(128, 64, 32, 16, 8, 4),
        labels_path=labels,
        clock=lambda: float(next(counter)),
    )
    started = time.time()
    run = oracle_annotate(
        project, dataset.truth, OraclePolicy(cluster_purity_threshold=0.9)
    )
    elapsed = time.time() - started
    return project, dataset, run, elapsed


def test_end_to_end_synthetic_reproduction(endtoend):
    project, dataset, run, elapsed = endtoend
    project.check_invariants()
    total = len(project.store.ids)
    assert total == 50_000

    labeling = project.labeling()
    truth = {o: label for o, label in dataset.truth.items() if label}
    agreement = predominant_label_agreement(labeling.assignments, truth)
    assigned_fraction = len(labeling.assignments) / total

    assert agreement.macro >= 0.95, f"macro precision {agreement.macro:.4f}"
    assert assigned_fraction >= 0.90, f"assigned {assigned_fraction:.4f}"
    assert run.total_judgments <= 0.05 * total, f"{run.total_judgments} judgments"
    assert elapsed < 600.0, f"took {elapsed:.0f}s"
    ok(
        f"end-to-end 50k run: macro precision {agreement.macro:.4f} >= 0.95, "
        f"{assigned_fraction:.1%} assigned >= 90%, {run.total_judgments} "
        f"judgments ({run.total_judgments / total:.2%} <= 5%), "
        f"{elapsed:.0f}s < 600s"
    )


def test_novelty_detection(endtoend):
    project, dataset, run, _ = endtoend
    holdout_size = dataset.class_sizes[HOLDOUT]
    assert holdout_size / 50_000 >= 0.005

    best_recall, best_precision, found_iter = 0.0, 0.0, None
    for cluster in project.clusters.values():
        if cluster.status is not ClusterStatus.GROWN:
            continue
        hits = sum(1 for o in cluster.members if dataset.truth.get(o) == HOLDOUT)
        if hits == 0:
            continue
        recall = hits / holdout_size
        prec = hits / cluster.size()
        if recall > best_recall:
            best_recall, best_precision, found_iter = recall, prec, cluster.created_iteration
    assert best_recall >= 0.9, f"holdout recall {best_recall:.3f}"
    assert best_precision >= 0.9, f"holdout precision {best_precision:.3f}"

    sizes, iterations = [], []
    for cls, size in dataset.class_sizes.items():
        if cls in run.discovery_iteration:
            sizes.append(size)
            iterations.append(run.discovery_iteration[cls])
    assert len(sizes) >= 15, "most classes must be discovered"
    rho = stats.spearmanr(sizes, iterations).statistic
    assert rho <= -0.5, f"rank correlation {rho:.3f}"
    ok(
        f"novelty: holdout recovered with recall {best_recall:.3f} / precision "
        f"{best_precision:.3f} (iteration {found_iter}); size-vs-discovery "
        f"rank correlation {rho:.3f} <= -0.5"
    )


def test_event_replay_byte_identical(endtoend):
    project, _, _, _ = endtoend
    expected = project.labeling_csv()
    replayed = Project.replay(project)
    assert replayed.labeling_csv() == expected
    reopened = Project.open(project.log.path.parent)
    assert reopened.labeling_csv() == expected
    ok(
        "event-sourcing replay (in memory and from disk) reproduces the "
        "labeling CSV byte-identically"
    )


# -- criterion 7: metrics exactness ---------------------------------------------


def brute_precision(tp, fp):
    return tp / (tp + fp)


def brute_jaccard(a, b):
    return len(set(a) & set(b)) / len(set(a) | set(b))


def brute_predominant(labeling, truth):
    classes = {}
    for obj, cls in labeling.items():
        classes.setdefault(cls, []).append(obj)
    scores = {}
    for cls, objs in classes.items():
        spiked = sorted(truth[o] for o in objs if o in truth)
        if not spiked:
            continue
        counts = {}
        for s in spiked:
            counts[s] = counts.get(s, 0) + 1
        top = max(counts.values())
        winner = min(c for c, v in counts.items() if v == top)
        scores[cls] = counts[winner] / len(spiked)
    macro = sum(scores[c] for c in sorted(scores)) / len(scores)
    return macro, scores


def test_metrics_exactness_1000_pairs():
    rng = np.random.default_rng(404)
    for trial in range(1000):
        tp = int(rng.integers(0, 500))
        fp = int(rng.integers(0, 500))
        if tp + fp:
            assert precision(tp, fp) == brute_precision(tp, fp)

        n = int(rng.integers(2, 120))
        objs = [f"o{i}" for i in range(n)]
        labeling_a = {o: f"a{rng.integers(0, 6)}" for o in objs}
        labeling_b = {o: f"b{rng.integers(0, 6)}" for o in objs}

        classes_a = {}
        for o, c in labeling_a.items():
            classes_a.setdefault(c, set()).add(o)
        classes_b = {}
        for o, c in labeling_b.items():
            classes_b.setdefault(c, set()).add(o)
        for ca, objs_a in classes_a.items():
            for cb, objs_b in classes_b.items():
                if objs_a | objs_b:
                    assert relative_overlap(objs_a, objs_b) == brute_jaccard(
                        objs_a, objs_b
                    )

        per_class = {c: float(rng.uniform()) for c in classes_a}
        assert macro_precision(per_class) == sum(
            per_class[c] for c in sorted(per_class)
        ) / len(per_class)

        truth = {o: labeling_b[o] for o in objs if rng.random() < 0.8}
        if set(labeling_a) & set(truth):
            report = predominant_label_agreement(labeling_a, truth)
            macro, scores = brute_predominant(labeling_a, truth)
            assert report.per_class == scores
            assert report.macro == macro
    ok(
        "precision / macro / RelOverlap / predominant agreement match "
        "brute-force set counting exactly on 1000 randomized labeling pairs"
    )


def test_metrics_session_rule_and_throughput():
    rng = np.random.default_rng(606)

    def event(ts, action="cluster_approved", affected=0):
        return AnnotationEvent(
            timestamp=float(ts), actor="t", action=action, objects_affected=affected
        )

    for _ in range(200):
        t = 0.0
        stamps = []
        for _ in range(int(rng.integers(1, 80))):
            t += float(rng.choice([1, 60, 300, 599, 600, 601, 2000]))
            stamps.append(t)
        events = [event(ts) for ts in stamps]
        sessions = segment_sessions(events)
        # exact reference segmentation
        expected = [[stamps[0]]]
        for prev, cur in zip(stamps, stamps[1:]):
            if cur - prev > 600.0:
                expected.append([])
            expected[-1].append(cur)
        got = [[e.timestamp for e in s.events] for s in sessions]
        assert got == expected

    events = [
        event(0, "iteration_started"),
        event(10, "cluster_approved", 400),
        event(360, "grow_committed", 600),
    ]
    assert throughput(events).objects_per_hour == 1000 / 0.1

    events = [
        event(0, "cluster_approved", 2000),
        event(600, "cluster_approved", 1500),
        event(1200, "grow_committed", 1000),
        event(1800, "grow_committed", 500),
        event(10000, "cluster_approved", 5000),
        event(10600, "grow_committed", 4000),
        event(11200, "grow_committed", 3000),
        event(11800, "grow_committed", 3000),
    ]
    assert throughput(events).objects_per_hour == 20000.0
    ok(
        "session segmentation matches the 600s rule exactly on 200 random "
        "logs; throughput arithmetic matches both worked examples"
    )
