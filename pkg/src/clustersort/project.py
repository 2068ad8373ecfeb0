"""Project state, iteration orchestration, and event-sourced persistence.

A project is a feature store plus a fold over its append-only event log:
every mutation validates against current state, then applies a payload that
the log records verbatim, so replaying the log (or any prefix) rebuilds the
exact same clusters, tree, and labeling.  A directory-backed project keeps
``project.json`` (static metadata) next to ``events.jsonl``.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import hierarchy as hier
from . import lifecycle
from .clustering import ClusteringParams, cluster_unassigned
from .errors import BusyError, InsufficientPointsError, StateError, StructureError
from .events import AnnotationEvent, EventLog
from .hierarchy import Hierarchy, Labeling
from .lifecycle import (
    Cluster,
    ClusterStatus,
    GrowMode,
    GrowSession,
    PageVerdict,
    Verdict,
    growth_queue,
    make_cluster,
    open_grow_session,
)
from .store import FeatureStore, attach_labels, load_features, load_labels

DEFAULT_SCHEDULE = (128, 64, 32, 16, 8, 4)


@dataclass
class IterationStart:
    iteration: int
    m: int
    cluster_ids: list[str]
    noise_count: int


class Project:
    """One annotation project: store, clusters, tree, unassigned pool, log."""

    def __init__(
        self,
        project_id: str,
        store: FeatureStore,
        schedule: tuple[int, ...] = DEFAULT_SCHEDULE,
        k: int = 1,
        log: EventLog | None = None,
        clock: Callable[[], float] | None = None,
        feature_path: str | None = None,
        labels_path: str | None = None,
    ):
        self.project_id = project_id
        self.store = store
        self.schedule = tuple(int(m) for m in schedule)
        self.k = int(k)
        self.log = log if log is not None else EventLog()
        self.clock = clock if clock is not None else time.time
        self.feature_path = feature_path
        self.labels_path = labels_path

        self.current_iteration = 0
        self.clusters: dict[str, Cluster] = {}
        self.tree: Hierarchy | None = None
        self.unassigned: set[str] = set(store.ids)
        self.sessions: dict[str, GrowSession] = {}
        self._session_cluster: dict[str, str] = {}
        self._commit_results: dict[str, list[str]] = {}
        self._next_cluster = 1
        self._next_session = 1
        self._lock = threading.RLock()
        self._clustering_busy = False

    # -- construction ------------------------------------------------------

    @classmethod
    def create(
        cls,
        directory: str | Path,
        feature_path: str | Path,
        schedule: tuple[int, ...] = DEFAULT_SCHEDULE,
        k: int = 1,
        labels_path: str | Path | None = None,
        clock: Callable[[], float] | None = None,
    ) -> "Project":
        """Create a directory-backed project around an existing feature file."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        store = load_features(feature_path)
        if labels_path is not None:
            attach_labels(store, load_labels(labels_path))
        meta = {
            "project_id": directory.name,
            "feature_path": str(Path(feature_path).resolve()),
            "labels_path": str(Path(labels_path).resolve()) if labels_path else None,
            "schedule": list(schedule),
            "k": k,
        }
        (directory / "project.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        log = EventLog(directory / "events.jsonl")
        return cls(
            project_id=meta["project_id"],
            store=store,
            schedule=tuple(schedule),
            k=k,
            log=log,
            clock=clock,
            feature_path=meta["feature_path"],
            labels_path=meta["labels_path"],
        )

    @classmethod
    def open(
        cls, directory: str | Path, clock: Callable[[], float] | None = None
    ) -> "Project":
        """Open a directory-backed project, rebuilding state from the log."""
        directory = Path(directory)
        meta = json.loads((directory / "project.json").read_text(encoding="utf-8"))
        store = load_features(meta["feature_path"])
        if meta.get("labels_path"):
            attach_labels(store, load_labels(meta["labels_path"]))
        log = EventLog(directory / "events.jsonl")
        project = cls(
            project_id=meta["project_id"],
            store=store,
            schedule=tuple(meta["schedule"]),
            k=int(meta["k"]),
            log=log,
            clock=clock,
            feature_path=meta["feature_path"],
            labels_path=meta.get("labels_path"),
        )
        for event in log:
            project._apply(event)
        return project

    @classmethod
    def replay(cls, source: "Project") -> "Project":
        """Rebuild a project in memory from another project's event log."""
        store = source.store
        fresh = cls(
            project_id=source.project_id,
            store=store,
            schedule=source.schedule,
            k=source.k,
            clock=source.clock,
        )
        for event in source.log:
            fresh._apply(event)
        return fresh

    # -- event plumbing ------------------------------------------------------

    def _emit(
        self, action: str, payload: dict, objects_affected: int, actor: str
    ) -> AnnotationEvent:
        event = AnnotationEvent(
            timestamp=float(self.clock()),
            actor=actor,
            action=action,
            payload=payload,
            objects_affected=objects_affected,
        )
        event = self.log.append(event)
        self._apply(event)
        return event

    def _apply(self, event: AnnotationEvent) -> None:
        getattr(self, f"_apply_{event.action}")(event.payload)

    def _apply_iteration_started(self, payload: dict) -> None:
        self.current_iteration = int(payload["iteration"])
        for seed in payload["seeds"]:
            cid = seed["cluster_id"]
            members = list(seed["members"])
            cluster = make_cluster(
                self.store, cid, members, iteration=self.current_iteration
            )
            self.clusters[cid] = cluster
            self.unassigned.difference_update(members)
            num = int(cid.lstrip("c"))
            self._next_cluster = max(self._next_cluster, num + 1)

    def _apply_cluster_approved(self, payload: dict) -> None:
        self.clusters[payload["cluster_id"]].status = ClusterStatus.VALIDATED

    def _apply_cluster_flagged(self, payload: dict) -> None:
        cluster = self.clusters[payload["cluster_id"]]
        cluster.status = ClusterStatus.VALIDATED
        cluster.flagged = True

    def _apply_cluster_rejected(self, payload: dict) -> None:
        cluster = self.clusters[payload["cluster_id"]]
        cluster.status = ClusterStatus.REJECTED
        self.unassigned.update(cluster.seed_members)

    def _apply_page_verdict(self, payload: dict) -> None:
        pass  # session-local; recorded for metrics and audit only

    def _apply_candidate_removed(self, payload: dict) -> None:
        pass  # session-local; recorded for metrics and audit only

    def _apply_grow_committed(self, payload: dict) -> None:
        cluster = self.clusters[payload["cluster_id"]]
        added = list(payload["added"])
        cluster.grown_members.extend(added)
        cluster.status = ClusterStatus.GROWN
        self.unassigned.difference_update(added)

    def _apply_tree_built(self, payload: dict) -> None:
        centroids = {
            cid: c.centroid
            for cid, c in self.clusters.items()
            if c.status is ClusterStatus.GROWN
        }
        self.tree = hier.build_upgma(centroids)

    def _apply_node_merged(self, payload: dict) -> None:
        assert self.tree is not None
        hier.merge_nodes(self.tree, payload["into"], payload["node"])

    def _apply_node_moved(self, payload: dict) -> None:
        assert self.tree is not None
        hier.move_node(self.tree, payload["node"], payload["new_parent"])

    def _apply_node_named(self, payload: dict) -> None:
        assert self.tree is not None
        hier.rename_node(self.tree, payload["node"], payload["name"])

    # -- iteration orchestration ---------------------------------------------

    def start_iteration(self, actor: str = "user") -> IterationStart | None:
        """Cluster the unassigned residue with the next schedule entry.

        Returns None once the schedule is exhausted.  Raises BusyError if a
        clustering job is already running and StateError while clusters from
        the previous iteration still await validation or growth.
        """
        with self._lock:
            if self._clustering_busy:
                raise BusyError(f"project {self.project_id} is already clustering")
            if self.current_iteration >= len(self.schedule):
                return None
            pending = [
                c.cluster_id
                for c in self.clusters.values()
                if c.status in (ClusterStatus.PROPOSED, ClusterStatus.VALIDATED)
            ]
            if pending:
                raise StateError(
                    f"clusters not yet grown or rejected: {sorted(pending)}"
                )
            self._clustering_busy = True
            iteration = self.current_iteration + 1
            m = self.schedule[iteration - 1]
            unassigned = sorted(self.unassigned)

        try:
            try:
                seed_set = cluster_unassigned(
                    self.store, unassigned, ClusteringParams(k=self.k, m=m)
                )
                seeds = seed_set.seeds
                noise_count = len(seed_set.noise)
            except InsufficientPointsError:
                seeds = []
                noise_count = len(unassigned)

            with self._lock:
                payload_seeds = []
                cluster_ids = []
                for _, members in seeds:
                    cid = f"c{self._next_cluster:04d}"
                    self._next_cluster += 1
                    cluster_ids.append(cid)
                    payload_seeds.append({"cluster_id": cid, "members": members})
                self._emit(
                    "iteration_started",
                    {
                        "iteration": iteration,
                        "m": m,
                        "seeds": payload_seeds,
                        "noise_count": noise_count,
                    },
                    objects_affected=0,
                    actor=actor,
                )
                return IterationStart(
                    iteration=iteration,
                    m=m,
                    cluster_ids=cluster_ids,
                    noise_count=noise_count,
                )
        finally:
            with self._lock:
                self._clustering_busy = False

    # -- validation ------------------------------------------------------------

    def validate(self, cluster_id: str, verdict: Verdict, actor: str = "user") -> Cluster:
        with self._lock:
            cluster = self._cluster(cluster_id)
            if cluster.status is not ClusterStatus.PROPOSED:
                raise StateError(
                    f"cluster {cluster_id} is {cluster.status.value}, not proposed"
                )
            action = {
                Verdict.APPROVE: "cluster_approved",
                Verdict.APPROVE_FLAG: "cluster_flagged",
                Verdict.REJECT: "cluster_rejected",
            }[verdict]
            self._emit(
                action,
                {"cluster_id": cluster_id},
                objects_affected=len(cluster.seed_members),
                actor=actor,
            )
            return cluster

    def proposed_clusters(self) -> list[Cluster]:
        return sorted(
            (c for c in self.clusters.values() if c.status is ClusterStatus.PROPOSED),
            key=lambda c: c.cluster_id,
        )

    def growth_queue(self) -> list[Cluster]:
        return growth_queue(list(self.clusters.values()))

    # -- growing ------------------------------------------------------------

    def open_grow_session(self, cluster_id: str) -> tuple[str, GrowSession]:
        with self._lock:
            cluster = self._cluster(cluster_id)
            for sid, other in self.sessions.items():
                if self._session_cluster[sid] == cluster_id and not other.committed:
                    raise StateError(f"cluster {cluster_id} already has an open session")
            session = open_grow_session(self.store, cluster, self.unassigned)
            sid = f"g{self._next_session:04d}"
            self._next_session += 1
            self.sessions[sid] = session
            self._session_cluster[sid] = cluster_id
            return sid, session

    def session(self, session_id: str) -> GrowSession:
        if session_id not in self.sessions:
            raise KeyError(f"unknown session {session_id!r}")
        return self.sessions[session_id]

    def record_page_verdict(
        self, session_id: str, page: int, verdict: PageVerdict, actor: str = "user"
    ) -> GrowSession:
        with self._lock:
            session = self.session(session_id)
            lifecycle.record_page_verdict(session, page, verdict)
            self._emit(
                "page_verdict",
                {
                    "cluster_id": self._session_cluster[session_id],
                    "session_id": session_id,
                    "page": page,
                    "verdict": verdict.value,
                },
                objects_affected=0,
                actor=actor,
            )
            return session

    def remove_candidate(
        self, session_id: str, object_id: str, actor: str = "user"
    ) -> GrowSession:
        with self._lock:
            session = self.session(session_id)
            lifecycle.remove_candidate(session, object_id)
            self._emit(
                "candidate_removed",
                {
                    "cluster_id": self._session_cluster[session_id],
                    "session_id": session_id,
                    "object_id": object_id,
                },
                objects_affected=0,
                actor=actor,
            )
            return session

    def commit_grow(self, session_id: str, actor: str = "user") -> list[str]:
        """Commit a finished session; idempotent per session id."""
        with self._lock:
            session = self.session(session_id)
            if session.committed:
                return list(self._commit_results[session_id])
            cluster_id = self._session_cluster[session_id]
            cluster = self._cluster(cluster_id)
            if cluster.status is not ClusterStatus.VALIDATED:
                raise StateError(
                    f"cluster {cluster_id} is {cluster.status.value}, not validated"
                )
            if not session.committable():
                raise StateError("boundary not pinned yet")
            added = session.pending_members()
            session.committed = True
            self._commit_results[session_id] = list(added)
            self._emit(
                "grow_committed",
                {"cluster_id": cluster_id, "session_id": session_id, "added": added},
                objects_affected=len(added),
                actor=actor,
            )
            return added

    # -- hierarchy ------------------------------------------------------------

    def build_tree(self, actor: str = "user") -> Hierarchy:
        with self._lock:
            grown = {
                cid: c
                for cid, c in self.clusters.items()
                if c.status is ClusterStatus.GROWN
            }
            if not grown:
                raise StateError("no grown clusters to arrange")
            self._emit(
                "tree_built",
                {"cluster_count": len(grown)},
                objects_affected=0,
                actor=actor,
            )
            assert self.tree is not None
            return self.tree

    def merge_node_into(self, node: str, into: str, actor: str = "user") -> None:
        with self._lock:
            tree = self._require_tree()
            tree.node(node)
            tree.node(into)
            if node == into or tree.is_ancestor(node, into) or tree.is_ancestor(into, node):
                raise StructureError(f"cannot merge {node!r} into {into!r}")
            self._emit(
                "node_merged",
                {"node": node, "into": into},
                objects_affected=0,
                actor=actor,
            )

    def move_node(self, node: str, new_parent: str, actor: str = "user") -> None:
        with self._lock:
            tree = self._require_tree()
            node_obj = tree.node(node)
            tree.node(new_parent)
            if node == new_parent or tree.is_ancestor(node, new_parent):
                raise StructureError(
                    f"{new_parent!r} is inside the subtree of {node!r}"
                )
            if node_obj.parent is None:
                raise StructureError("cannot move the root")
            self._emit(
                "node_moved",
                {"node": node, "new_parent": new_parent},
                objects_affected=0,
                actor=actor,
            )

    def name_node(self, node: str, name: str, actor: str = "user") -> None:
        with self._lock:
            tree = self._require_tree()
            tree.node(node)
            if not name or "/" in name:
                raise ValueError(f"invalid node name {name!r}")
            self._emit(
                "node_named",
                {"node": node, "name": name},
                objects_affected=self._objects_under(node),
                actor=actor,
            )

    # -- export ------------------------------------------------------------

    def labeling(self) -> Labeling:
        tree = self._require_tree()
        grown = {
            cid: c for cid, c in self.clusters.items() if c.status is ClusterStatus.GROWN
        }
        return hier.export_labeling(tree, grown)

    def labeling_csv(self) -> str:
        return hier.labeling_csv(self.labeling(), residuals=set(self.unassigned))

    # -- helpers ------------------------------------------------------------

    def _cluster(self, cluster_id: str) -> Cluster:
        if cluster_id not in self.clusters:
            raise KeyError(f"unknown cluster {cluster_id!r}")
        return self.clusters[cluster_id]

    def _require_tree(self) -> Hierarchy:
        if self.tree is None:
            raise StateError("tree not built yet")
        return self.tree

    def _objects_under(self, node_id: str) -> int:
        tree = self._require_tree()
        return sum(
            self.clusters[ref].size()
            for nid in tree.subtree(node_id)
            for ref in tree.nodes[nid].cluster_refs
        )

    def assigned_objects(self) -> set[str]:
        out: set[str] = set()
        for cluster in self.clusters.values():
            if cluster.status is not ClusterStatus.REJECTED:
                out.update(cluster.members)
        return out

    def check_invariants(self) -> None:
        """Assignment exclusivity and pool conservation; raises on violation."""
        assigned: dict[str, str] = {}
        for cluster in self.clusters.values():
            if cluster.status is ClusterStatus.REJECTED:
                continue
            for obj in cluster.members:
                if obj in assigned:
                    raise AssertionError(
                        f"{obj} in both {assigned[obj]} and {cluster.cluster_id}"
                    )
                assigned[obj] = cluster.cluster_id
        overlap = self.unassigned & set(assigned)
        if overlap:
            raise AssertionError(f"objects both assigned and unassigned: {overlap}")
        union = self.unassigned | set(assigned)
        if union != set(self.store.ids):
            raise AssertionError("assigned + unassigned does not cover the store")
