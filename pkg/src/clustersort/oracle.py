"""Oracle annotator: replays the full human workflow from ground truth.

The oracle approves seeds whose majority-label purity clears a threshold,
answers page probes against the cluster's dominant label, grows every
validated cluster, and finally builds and auto-names the hierarchy.  It
makes every interactive step testable without a human and is deterministic
given (dataset seed, policy, schedule).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .lifecycle import ClusterStatus, PageVerdict, Verdict
from .project import Project

NOISE_LABEL = ""


@dataclass(frozen=True)
class OraclePolicy:
    """Decision rules standing in for the human annotator."""

    cluster_purity_threshold: float = 0.90
    page_accept_rule: str = "all_match"  # or "majority"
    page_majority_threshold: float = 0.90
    flag_large_seeds: int = 0  # flag seeds with at least this many members; 0 = never
    turtle_enabled: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.cluster_purity_threshold <= 1.0:
            raise ValueError("cluster_purity_threshold must be in [0, 1]")
        if self.page_accept_rule not in ("all_match", "majority"):
            raise ValueError(f"unknown page_accept_rule {self.page_accept_rule!r}")
        if not 0.0 <= self.page_majority_threshold <= 1.0:
            raise ValueError("page_majority_threshold must be in [0, 1]")

    @classmethod
    def from_json(cls, path: str | Path) -> "OraclePolicy":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class OracleRun:
    """Decision counts and discovery record of one complete oracle pass."""

    cluster_verdicts: int = 0
    page_verdicts: int = 0
    naming_acts: int = 0
    iterations: int = 0
    # class -> first iteration in which a cluster dominated by it held
    # at least 5% of the class's objects
    discovery_iteration: dict[str, int] = None  # type: ignore[assignment]
    cluster_dominant: dict[str, str] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.discovery_iteration is None:
            self.discovery_iteration = {}
        if self.cluster_dominant is None:
            self.cluster_dominant = {}

    @property
    def total_judgments(self) -> int:
        return self.cluster_verdicts + self.page_verdicts + self.naming_acts


def dominant_label(members, truth: Mapping[str, str]) -> tuple[str, float]:
    """Majority truth label of a member list and its share; ties to smallest."""
    counts: dict[str, int] = {}
    for obj in members:
        label = truth.get(obj, NOISE_LABEL)
        counts[label] = counts.get(label, 0) + 1
    top = max(counts.values())
    label = min(lbl for lbl, c in counts.items() if c == top)
    return label, top / len(members)


def _page_matches(page, label: str, truth: Mapping[str, str], policy: OraclePolicy) -> bool:
    if not page:
        return False
    hits = sum(1 for obj in page if truth.get(obj, NOISE_LABEL) == label)
    if policy.page_accept_rule == "all_match":
        return hits == len(page)
    return hits / len(page) >= policy.page_majority_threshold


def _grow_cluster(
    project: Project, cluster_id: str, truth: Mapping[str, str], policy: OraclePolicy, run: OracleRun
) -> None:
    label = run.cluster_dominant[cluster_id]
    sid, session = project.open_grow_session(cluster_id)
    while (probe := session.search.pending()) is not None:
        verdict = (
            PageVerdict.MATCH
            if _page_matches(session.page(probe), label, truth, policy)
            else PageVerdict.NO_MATCH
        )
        project.record_page_verdict(sid, probe, verdict, actor="oracle")
        run.page_verdicts += 1
    project.commit_grow(sid, actor="oracle")


def _record_discoveries(project: Project, truth: Mapping[str, str], run: OracleRun) -> None:
    class_totals: dict[str, int] = {}
    for label in truth.values():
        if label:
            class_totals[label] = class_totals.get(label, 0) + 1
    for cluster in project.clusters.values():
        if cluster.status is not ClusterStatus.GROWN:
            continue
        if cluster.created_iteration != project.current_iteration:
            continue
        label = run.cluster_dominant.get(cluster.cluster_id, NOISE_LABEL)
        if not label:
            continue
        hits = sum(1 for obj in cluster.members if truth.get(obj) == label)
        if hits >= 0.05 * class_totals.get(label, 1):
            run.discovery_iteration.setdefault(label, project.current_iteration)


def oracle_annotate(
    project: Project, truth: Mapping[str, str], policy: OraclePolicy | None = None
) -> OracleRun:
    """Run all iterations, validation, growth, tree building, and naming."""
    policy = policy or OraclePolicy()
    run = OracleRun()
    while True:
        started = project.start_iteration(actor="oracle")
        if started is None:
            break
        run.iterations = started.iteration

        for cluster in project.proposed_clusters():
            label, purity = dominant_label(cluster.seed_members, truth)
            run.cluster_dominant[cluster.cluster_id] = label
            if purity >= policy.cluster_purity_threshold and label != NOISE_LABEL:
                verdict = (
                    Verdict.APPROVE_FLAG
                    if policy.flag_large_seeds
                    and len(cluster.seed_members) >= policy.flag_large_seeds
                    else Verdict.APPROVE
                )
            else:
                verdict = Verdict.REJECT
            project.validate(cluster.cluster_id, verdict, actor="oracle")
            run.cluster_verdicts += 1

        for cluster in project.growth_queue():
            _grow_cluster(project, cluster.cluster_id, truth, policy, run)
        _record_discoveries(project, truth, run)

    grown = [c for c in project.clusters.values() if c.status is ClusterStatus.GROWN]
    if grown:
        tree = project.build_tree(actor="oracle")
        for nid in sorted(tree.nodes):
            node = tree.nodes[nid]
            if node.cluster_refs:
                label = run.cluster_dominant.get(node.cluster_refs[0], NOISE_LABEL)
                name = label if label else "mixed"
                project.name_node(nid, name.replace("/", "-"), actor="oracle")
                run.naming_acts += 1
    return run
