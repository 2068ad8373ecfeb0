"""HTTP/JSON surface over the project service.

Thin, loss-free mappings onto the validation, growing, hierarchy, and
metrics operations: every endpoint enforces exactly the underlying module's
state checks, and every mutation lands in the event log.  Protocol
violations map to 400, unknown ids to 404, and state conflicts to 409.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query, Response
from pydantic import BaseModel

from .errors import (
    BusyError,
    ClusterSortError,
    InsufficientPointsError,
    ProtocolError,
    StateError,
    StructureError,
)
from .hierarchy import node_path
from .lifecycle import ClusterStatus, GrowMode, PageVerdict, Verdict, dissimilar_display_order
from .metrics import throughput
from .project import DEFAULT_SCHEDULE, Project


class CreateProject(BaseModel):
    feature_path: str
    schedule: list[int] = list(DEFAULT_SCHEDULE)
    k: int = 1
    labels_path: Optional[str] = None
    project_id: Optional[str] = None


class VerdictBody(BaseModel):
    verdict: str


class NameBody(BaseModel):
    name: str


class ServiceState:
    """Registry resolving global cluster/session/node ids to their project."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.projects: dict[str, Project] = {}
        self.cluster_owner: dict[str, str] = {}
        self.session_owner: dict[str, str] = {}
        self.lock = threading.Lock()

    def add_project(self, project: Project) -> None:
        self.projects[project.project_id] = project
        for cid in project.clusters:
            self.cluster_owner[cid] = project.project_id

    def project(self, project_id: str) -> Project:
        if project_id not in self.projects:
            raise HTTPException(404, f"unknown project {project_id!r}")
        return self.projects[project_id]

    def by_cluster(self, cluster_id: str) -> Project:
        if cluster_id not in self.cluster_owner:
            raise HTTPException(404, f"unknown cluster {cluster_id!r}")
        return self.projects[self.cluster_owner[cluster_id]]

    def by_session(self, session_id: str) -> Project:
        if session_id not in self.session_owner:
            raise HTTPException(404, f"unknown grow session {session_id!r}")
        return self.projects[self.session_owner[session_id]]

    def by_node(self, node_id: str) -> Project:
        for project in self.projects.values():
            if project.tree is not None and node_id in project.tree.nodes:
                return project
        raise HTTPException(404, f"unknown node {node_id!r}")


def _translate(exc: ClusterSortError) -> HTTPException:
    if isinstance(exc, (StateError, BusyError, StructureError)):
        return HTTPException(409, str(exc))
    if isinstance(exc, (ProtocolError, InsufficientPointsError, ValueError)):
        return HTTPException(400, str(exc))
    return HTTPException(500, str(exc))


def _cluster_info(project: Project, cluster_id: str) -> dict:
    c = project.clusters[cluster_id]
    return {
        "cluster_id": c.cluster_id,
        "status": c.status.value,
        "flagged": c.flagged,
        "seed_size": len(c.seed_members),
        "grown_size": len(c.grown_members),
        "created_iteration": c.created_iteration,
    }


def _session_info(project: Project, session_id: str) -> dict:
    s = project.session(session_id)
    return {
        "session_id": session_id,
        "cluster_id": s.cluster_id,
        "mode": s.mode.value,
        "page_count": s.page_count,
        "page_size": s.page_size,
        "committed": s.committed,
        "boundary_pinned": s.mode is GrowMode.TURTLE or s.search.done,
        "threshold": s.search.threshold,
        "page_verdicts": {str(p): v.value for p, v in s.page_verdicts.items()},
        "current_page": s.current_page(),
    }


def create_app(root: str | Path = ".", state: ServiceState | None = None) -> FastAPI:
    app = FastAPI(title="clustersort", version="0.1.0")
    svc = state if state is not None else ServiceState(Path(root))
    app.state.service = svc

    @app.exception_handler(ClusterSortError)
    async def _domain_error(request, exc: ClusterSortError):  # pragma: no cover
        raise _translate(exc)

    # -- projects ------------------------------------------------------------

    @app.post("/projects")
    def create_project(body: CreateProject):
        feature_path = Path(body.feature_path)
        if not feature_path.exists():
            raise HTTPException(400, f"no such feature file: {feature_path}")
        project_id = body.project_id or f"project{len(svc.projects) + 1:03d}"
        if project_id in svc.projects:
            raise HTTPException(409, f"project {project_id!r} already exists")
        directory = svc.root / project_id
        project = Project.create(
            directory,
            feature_path,
            schedule=tuple(body.schedule),
            k=body.k,
            labels_path=body.labels_path,
        )
        svc.add_project(project)
        return {
            "project_id": project.project_id,
            "objects": project.store.count,
            "schedule": list(project.schedule),
        }

    @app.post("/projects/{p}/iterations")
    def start_iteration(p: str):
        project = svc.project(p)
        try:
            started = project.start_iteration(actor="api")
        except ClusterSortError as exc:
            raise _translate(exc)
        if started is None:
            return {"done": True}
        for cid in started.cluster_ids:
            svc.cluster_owner[cid] = p
        return {
            "done": False,
            "iteration": started.iteration,
            "m": started.m,
            "clusters": started.cluster_ids,
            "noise_count": started.noise_count,
        }

    @app.get("/projects/{p}/clusters")
    def list_clusters(p: str, status: Optional[str] = Query(default=None)):
        project = svc.project(p)
        out = []
        for cid in sorted(project.clusters):
            info = _cluster_info(project, cid)
            if status is None or info["status"] == status:
                out.append(info)
        return {"clusters": out}

    # -- clusters ------------------------------------------------------------

    @app.get("/clusters/{c}/members")
    def cluster_members(c: str, order: Optional[str] = Query(default=None)):
        project = svc.by_cluster(c)
        cluster = project.clusters[c]
        members = cluster.members
        if order == "dissimilar":
            members = dissimilar_display_order(project.store, cluster.seed_members)
            members = members + cluster.grown_members
        return {"cluster_id": c, "members": members}

    def _validate(c: str, verdict: Verdict) -> dict:
        project = svc.by_cluster(c)
        try:
            project.validate(c, verdict, actor="api")
        except ClusterSortError as exc:
            raise _translate(exc)
        return _cluster_info(project, c)

    @app.post("/clusters/{c}/approve")
    def approve(c: str):
        return _validate(c, Verdict.APPROVE)

    @app.post("/clusters/{c}/approve-flag")
    def approve_flag(c: str):
        return _validate(c, Verdict.APPROVE_FLAG)

    @app.post("/clusters/{c}/reject")
    def reject(c: str):
        return _validate(c, Verdict.REJECT)

    @app.post("/clusters/{c}/grow-sessions")
    def open_session(c: str):
        project = svc.by_cluster(c)
        try:
            sid, _ = project.open_grow_session(c)
        except ClusterSortError as exc:
            raise _translate(exc)
        svc.session_owner[sid] = project.project_id
        return _session_info(project, sid)

    # -- grow sessions ------------------------------------------------------------

    @app.get("/grow-sessions/{s}/next-probe")
    def get_next_probe(s: str):
        project = svc.by_session(s)
        session = project.session(s)
        if session.mode is GrowMode.TURTLE:
            raise HTTPException(409, "binary search is disabled in turtle mode")
        if session.committed:
            raise HTTPException(409, "session already committed")
        page = session.search.pending()
        return {"session_id": s, "page": page, "done": page is None}

    @app.get("/grow-sessions/{s}/pages/{i}")
    def get_page(s: str, i: int):
        project = svc.by_session(s)
        session = project.session(s)
        if i < 0 or i >= session.page_count:
            raise HTTPException(404, f"page {i} out of range")
        return {
            "session_id": s,
            "page": i,
            "objects": session.page(i),
            "decided": sorted(
                (session.turtle_removed | session.turtle_accepted)
                & set(session.page(i))
            ),
        }

    @app.post("/grow-sessions/{s}/pages/{i}/verdict")
    def post_verdict(s: str, i: int, body: VerdictBody):
        project = svc.by_session(s)
        try:
            verdict = PageVerdict(body.verdict)
        except ValueError:
            raise HTTPException(400, f"unknown verdict {body.verdict!r}")
        try:
            project.record_page_verdict(s, i, verdict, actor="api")
        except ClusterSortError as exc:
            raise _translate(exc)
        return _session_info(project, s)

    @app.post("/grow-sessions/{s}/remove/{object_id}")
    def post_remove(s: str, object_id: str):
        project = svc.by_session(s)
        try:
            project.remove_candidate(s, object_id, actor="api")
        except ClusterSortError as exc:
            raise _translate(exc)
        return _session_info(project, s)

    @app.post("/grow-sessions/{s}/commit")
    def post_commit(s: str):
        project = svc.by_session(s)
        try:
            added = project.commit_grow(s, actor="api")
        except ClusterSortError as exc:
            raise _translate(exc)
        return {"session_id": s, "added": added, "added_count": len(added)}

    # -- hierarchy ------------------------------------------------------------

    def _tree_payload(project: Project) -> dict:
        tree = project.tree
        if tree is None:
            raise HTTPException(404, "tree not built yet")
        nodes = {}
        for nid, node in tree.nodes.items():
            nodes[nid] = {
                "node_id": nid,
                "parent": node.parent,
                "children": list(node.children),
                "cluster_refs": list(node.cluster_refs),
                "name": node.name,
                "merge_height": node.merge_height,
                "path": node_path(tree, nid),
            }
        return {"root": tree.root_id, "nodes": nodes}

    @app.post("/projects/{p}/tree")
    def build_tree(p: str):
        project = svc.project(p)
        try:
            project.build_tree(actor="api")
        except ClusterSortError as exc:
            raise _translate(exc)
        return _tree_payload(project)

    @app.get("/projects/{p}/tree")
    def get_tree(p: str):
        return _tree_payload(svc.project(p))

    @app.post("/nodes/{n}/merge-into/{m}")
    def merge_into(n: str, m: str):
        project = svc.by_node(n)
        try:
            project.merge_node_into(n, m, actor="api")
        except ClusterSortError as exc:
            raise _translate(exc)
        return _tree_payload(project)

    @app.post("/nodes/{n}/move/{parent}")
    def move(n: str, parent: str):
        project = svc.by_node(n)
        try:
            project.move_node(n, parent, actor="api")
        except ClusterSortError as exc:
            raise _translate(exc)
        return _tree_payload(project)

    @app.post("/nodes/{n}/name")
    def name(n: str, body: NameBody):
        project = svc.by_node(n)
        try:
            project.name_node(n, body.name, actor="api")
        except (ClusterSortError, ValueError) as exc:
            if isinstance(exc, ClusterSortError):
                raise _translate(exc)
            raise HTTPException(400, str(exc))
        return _tree_payload(project)

    # -- export ------------------------------------------------------------

    @app.get("/projects/{p}/labeling")
    def labeling(p: str):
        project = svc.project(p)
        try:
            csv_text = project.labeling_csv()
        except ClusterSortError as exc:
            raise _translate(exc)
        return Response(content=csv_text, media_type="text/csv")

    @app.get("/projects/{p}/metrics")
    def metrics(p: str):
        project = svc.project(p)
        events = list(project.log)
        out: dict = {
            "project_id": p,
            "objects": project.store.count,
            "unassigned": len(project.unassigned),
            "clusters": {
                status.value: sum(
                    1 for c in project.clusters.values() if c.status is status
                )
                for status in ClusterStatus
            },
            "events": len(events),
        }
        try:
            rates = throughput(events)
            out["objects_per_hour"] = rates.objects_per_hour
            out["per_iteration"] = rates.per_iteration
        except ClusterSortError:
            out["objects_per_hour"] = None
            out["per_iteration"] = []
        return out

    return app
