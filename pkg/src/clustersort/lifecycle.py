"""Cluster validation and growing.

Validation moves a proposed cluster to validated/rejected, with a
max-dissimilar display order to make impurities pop out.  Growing walks the
unassigned objects sorted by distance to the seed centroid, in pages of 50,
and finds the last matching page with a galloping probe sequence followed by
binary search; removing a single candidate switches the session to turtle
mode, where every remaining object is accepted or removed individually.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ProtocolError, StateError
from .store import FeatureStore

PAGE_SIZE = 50


class ClusterStatus(enum.Enum):
    PROPOSED = "proposed"
    VALIDATED = "validated"
    REJECTED = "rejected"
    GROWN = "grown"


class Verdict(enum.Enum):
    APPROVE = "approve"
    APPROVE_FLAG = "approve_flag"
    REJECT = "reject"


class PageVerdict(enum.Enum):
    MATCH = "match"
    NO_MATCH = "no_match"


@dataclass
class Cluster:
    """A seed plus members accreted during growth.

    The centroid is the mean of the seed members' vectors, frozen at
    creation; growth never updates it (the candidate order of an open
    session depends on it).
    """

    cluster_id: str
    seed_members: list[str]
    centroid: np.ndarray
    status: ClusterStatus = ClusterStatus.PROPOSED
    grown_members: list[str] = field(default_factory=list)
    flagged: bool = False
    created_iteration: int = 0

    @property
    def members(self) -> list[str]:
        return self.seed_members + self.grown_members

    def size(self) -> int:
        return len(self.seed_members) + len(self.grown_members)


def make_cluster(
    store: FeatureStore, cluster_id: str, seed_members: list[str], iteration: int = 0
) -> Cluster:
    centroid = store.matrix(seed_members).astype(np.float64).mean(axis=0)
    return Cluster(
        cluster_id=cluster_id,
        seed_members=list(seed_members),
        centroid=centroid,
        created_iteration=iteration,
    )


def dissimilar_display_order(store: FeatureStore, members: list[str]) -> list[str]:
    """Alternating display order: neighbors are maximally dissimilar.

    Starts at the member closest to the member centroid; each following
    element is the remaining member farthest from the one just placed.
    Ties go to the smaller id.
    """
    if not members:
        raise ValueError("members must be nonempty")
    ids = sorted(members)
    pts = store.matrix(ids).astype(np.float64)
    centroid = pts.mean(axis=0)
    remaining = list(range(len(ids)))

    d0 = np.sqrt(((pts - centroid) ** 2).sum(axis=1))
    first = min(remaining, key=lambda i: (d0[i], ids[i]))
    order = [first]
    remaining.remove(first)
    while remaining:
        prev = pts[order[-1]]
        d = np.sqrt(((pts[remaining] - prev) ** 2).sum(axis=1))
        best_d = d.max()
        nxt = min(
            (remaining[j] for j in range(len(remaining)) if d[j] == best_d),
            key=lambda i: ids[i],
        )
        order.append(nxt)
        remaining.remove(nxt)
    return [ids[i] for i in order]


def validate_cluster(cluster: Cluster, verdict: Verdict) -> Cluster:
    """Apply an approval verdict to a proposed cluster.

    Rejection marks the cluster rejected; returning its members to the
    unassigned pool is the caller's (project's) bookkeeping.
    """
    if cluster.status is not ClusterStatus.PROPOSED:
        raise StateError(
            f"cluster {cluster.cluster_id} is {cluster.status.value}, not proposed"
        )
    if verdict is Verdict.REJECT:
        cluster.status = ClusterStatus.REJECTED
    else:
        cluster.status = ClusterStatus.VALIDATED
        cluster.flagged = verdict is Verdict.APPROVE_FLAG
    return cluster


def growth_queue(clusters: list[Cluster]) -> list[Cluster]:
    """Validated clusters in growth order: flagged first, then larger seeds."""
    ready = [c for c in clusters if c.status is ClusterStatus.VALIDATED]
    return sorted(
        ready, key=lambda c: (not c.flagged, -len(c.seed_members), c.cluster_id)
    )


class BoundarySearch:
    """Gallop-then-binary search for the last matching page.

    Gallop probes pages 2^j - 1 (0, 1, 3, 7, ...) clamped to the last page
    until a page fails or the end is reached; the binary phase then keeps
    (lo = last match, hi = first failure) and probes the midpoint until
    hi == lo + 1.  ``threshold`` is the last matching page, or None when
    page 0 already fails.
    """

    def __init__(self, page_count: int):
        if page_count < 0:
            raise ValueError("page_count must be >= 0")
        self.page_count = page_count
        self.lo: int | None = None
        self.hi: int | None = None
        self._gallop_step = 0
        self.done = page_count == 0
        self.threshold: int | None = None
        self.judged: list[tuple[int, bool]] = []

    def pending(self) -> int | None:
        """Page to judge next, or None when the boundary is pinned."""
        if self.done:
            return None
        if self.hi is None:
            return min(2**self._gallop_step - 1, self.page_count - 1)
        assert self.lo is not None
        return (self.lo + self.hi) // 2

    def record(self, page: int, match: bool) -> None:
        expected = self.pending()
        if expected is None:
            raise ProtocolError("search already finished")
        if page != expected:
            raise ProtocolError(f"expected verdict for page {expected}, got {page}")
        self.judged.append((page, match))
        if self.hi is None:
            if match:
                if page == self.page_count - 1:
                    self.done = True
                    self.threshold = page
                else:
                    self.lo = page
                    self._gallop_step += 1
            else:
                if page == 0:
                    self.done = True
                    self.threshold = None
                else:
                    self.hi = page
        else:
            if match:
                self.lo = page
            else:
                self.hi = page
        if not self.done and self.hi is not None:
            assert self.lo is not None
            if self.hi == self.lo + 1:
                self.done = True
                self.threshold = self.lo


class GrowMode(enum.Enum):
    SEARCH = "search"
    TURTLE = "turtle"


@dataclass
class GrowSession:
    """An in-progress growth of one validated cluster."""

    cluster_id: str
    candidate_order: list[str]
    page_size: int = PAGE_SIZE
    mode: GrowMode = GrowMode.SEARCH
    committed: bool = False
    page_verdicts: dict[int, PageVerdict] = field(default_factory=dict)
    turtle_removed: set[str] = field(default_factory=set)
    turtle_accepted: set[str] = field(default_factory=set)
    search: BoundarySearch = None  # type: ignore[assignment]
    # pages <= turtle_base were implied matches when turtle mode began
    turtle_base: int | None = None
    turtle_cursor: int | None = None

    def __post_init__(self) -> None:
        if self.search is None:
            self.search = BoundarySearch(self.page_count)

    @property
    def page_count(self) -> int:
        return math.ceil(len(self.candidate_order) / self.page_size)

    def page(self, index: int) -> list[str]:
        if index < 0 or index >= self.page_count:
            raise IndexError(f"page {index} out of range [0, {self.page_count})")
        lo = index * self.page_size
        return self.candidate_order[lo : lo + self.page_size]

    def current_page(self) -> int | None:
        """Page currently under review: pending probe or turtle cursor."""
        if self.mode is GrowMode.SEARCH:
            return self.search.pending()
        return self.turtle_cursor

    def committable(self) -> bool:
        if self.committed:
            return False
        if self.mode is GrowMode.TURTLE:
            return True
        return self.search.done

    def pending_members(self) -> list[str]:
        """Objects the session would add if committed now."""
        if self.mode is GrowMode.SEARCH:
            boundary = self.search.threshold
            if boundary is None:
                return []
            return self.candidate_order[: (boundary + 1) * self.page_size]
        out: list[str] = []
        if self.turtle_base is not None:
            out.extend(self.candidate_order[: (self.turtle_base + 1) * self.page_size])
        out.extend(
            o for o in self.candidate_order if o in self.turtle_accepted
        )
        return out


def open_grow_session(
    store: FeatureStore, cluster: Cluster, unassigned: set[str]
) -> GrowSession:
    """Start growing a validated cluster over the unassigned objects.

    Candidates are sorted by ascending distance to the frozen seed centroid,
    ties by object id.
    """
    if cluster.status is not ClusterStatus.VALIDATED:
        raise StateError(
            f"cluster {cluster.cluster_id} is {cluster.status.value}, not validated"
        )
    ids = sorted(unassigned)
    if ids:
        pts = store.matrix(ids).astype(np.float64)
        d = np.sqrt(((pts - cluster.centroid) ** 2).sum(axis=1))
        order = sorted(range(len(ids)), key=lambda i: (d[i], ids[i]))
        candidates = [ids[i] for i in order]
    else:
        candidates = []
    return GrowSession(cluster_id=cluster.cluster_id, candidate_order=candidates)


def next_probe(session: GrowSession) -> int | None:
    """Next page to judge, or None once the boundary is pinned."""
    if session.committed:
        raise StateError("session already committed")
    if session.mode is GrowMode.TURTLE:
        raise StateError("binary search is disabled in turtle mode")
    return session.search.pending()


def record_page_verdict(
    session: GrowSession, page: int, verdict: PageVerdict
) -> GrowSession:
    """Judge a page.

    In search mode the page must be the pending probe.  In turtle mode the
    page must be the current sequential page, and the verdict is a bulk
    decision on its still-undecided objects (match accepts them, no_match
    removes them); the cursor then advances.
    """
    if session.committed:
        raise StateError("session already committed")
    if page in session.page_verdicts:
        raise ProtocolError(f"page {page} already judged")
    if session.mode is GrowMode.SEARCH:
        session.search.record(page, verdict is PageVerdict.MATCH)
        session.page_verdicts[page] = verdict
    else:
        if page != session.turtle_cursor:
            raise ProtocolError(
                f"turtle mode reviews page {session.turtle_cursor}, got {page}"
            )
        for obj in session.page(page):
            if obj in session.turtle_removed or obj in session.turtle_accepted:
                continue
            if verdict is PageVerdict.MATCH:
                session.turtle_accepted.add(obj)
            else:
                session.turtle_removed.add(obj)
        session.page_verdicts[page] = verdict
        _advance_turtle(session)
    return session


def accept_candidate(session: GrowSession, object_id: str) -> GrowSession:
    """Individually accept one object of the current turtle page."""
    if session.committed:
        raise StateError("session already committed")
    if session.mode is not GrowMode.TURTLE:
        raise ProtocolError("individual acceptance only applies in turtle mode")
    _require_on_current_page(session, object_id)
    session.turtle_accepted.add(object_id)
    _advance_turtle(session)
    return session


def remove_candidate(session: GrowSession, object_id: str) -> GrowSession:
    """Remove one object from the current page; switches to turtle mode.

    On activation, pages up to the last known matching page stay committed
    wholesale; every object from the current page onward must be accepted
    or removed individually.  Turtle mode is irreversible for the session.
    """
    if session.committed:
        raise StateError("session already committed")
    if session.mode is GrowMode.SEARCH:
        current = session.search.pending()
        if current is None:
            raise ProtocolError("search finished; no current page")
        _require_on_page(session, object_id, current)
        session.mode = GrowMode.TURTLE
        session.turtle_base = session.search.lo
        session.turtle_cursor = current
        session.turtle_removed.add(object_id)
        _advance_turtle(session)
    else:
        _require_on_current_page(session, object_id)
        session.turtle_removed.add(object_id)
        _advance_turtle(session)
    return session


def commit_grow(session: GrowSession, cluster: Cluster) -> list[str]:
    """Finish the session: move the accepted candidates into the cluster.

    Returns the objects added; the caller removes them from its unassigned
    pool.  The cluster becomes grown; its centroid is not recomputed.
    """
    if session.committed:
        raise StateError("session already committed")
    if cluster.cluster_id != session.cluster_id:
        raise ValueError("session does not belong to this cluster")
    if cluster.status is not ClusterStatus.VALIDATED:
        raise StateError(
            f"cluster {cluster.cluster_id} is {cluster.status.value}, not validated"
        )
    if not session.committable():
        raise StateError("boundary not pinned yet")
    added = session.pending_members()
    session.committed = True
    cluster.grown_members.extend(added)
    cluster.status = ClusterStatus.GROWN
    return added


def _require_on_page(session: GrowSession, object_id: str, page: int) -> None:
    if object_id not in session.page(page):
        raise ProtocolError(f"{object_id!r} is not on page {page}")


def _require_on_current_page(session: GrowSession, object_id: str) -> None:
    cursor = session.turtle_cursor
    if cursor is None or cursor >= session.page_count:
        raise ProtocolError("no page under review")
    _require_on_page(session, object_id, cursor)
    if object_id in session.turtle_removed or object_id in session.turtle_accepted:
        raise ProtocolError(f"{object_id!r} already decided")


def _advance_turtle(session: GrowSession) -> None:
    """Move the turtle cursor past fully decided pages."""
    while session.turtle_cursor is not None and session.turtle_cursor < session.page_count:
        page = session.page(session.turtle_cursor)
        if all(
            o in session.turtle_removed or o in session.turtle_accepted for o in page
        ):
            session.turtle_cursor += 1
        else:
            return
