"""Density-based seed extraction.

Pipeline: exact k-NN core distances -> mutual reachability -> minimum
spanning tree (Prim, O(n^2) time / O(n) memory) -> single-linkage dendrogram
-> condensed tree (split sides below the minimum cluster size fall out as
points) -> excess-of-mass selection of stable nodes.  Everything is a pure
function of its inputs; candidate ids are canonicalized by sorting so the
partition is independent of input order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import InsufficientPointsError
from .store import FeatureStore

# Row-block size for pairwise-distance passes; bounds peak memory at roughly
# block * n * 8 bytes.
_BLOCK = 1024


@dataclass(frozen=True)
class ClusteringParams:
    """Neighborhood size k and minimum cluster size m."""

    k: int = 1
    m: int = 2

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")


@dataclass
class CondensedTreeNode:
    """Node of the condensed density hierarchy.

    ``point_members`` lists objects that fall out of this node individually,
    as (object id, lambda) pairs; lambda is 1/distance.  ``stability`` is
    the total persistence of the node's points above its birth level.
    """

    node_id: int
    parent_id: int | None
    lambda_birth: float
    lambda_death: float = 0.0
    point_members: list[tuple[Hashable, float]] = field(default_factory=list)
    child_nodes: list["CondensedTreeNode"] = field(default_factory=list)
    stability: float = 0.0

    def all_points(self) -> list:
        """Every point that ever belonged to this node."""
        out = [p for p, _ in self.point_members]
        for child in self.child_nodes:
            out.extend(child.all_points())
        return out

    def size(self) -> int:
        return len(self.point_members) + sum(c.size() for c in self.child_nodes)

    def iter_nodes(self) -> Iterable["CondensedTreeNode"]:
        yield self
        for child in self.child_nodes:
            yield from child.iter_nodes()


@dataclass
class SeedSet:
    """Disjoint dense seeds plus the rejected noise remainder."""

    seeds: list[tuple[str, list]]
    noise: list


# -- distances ---------------------------------------------------------------


def _core_distances(points: np.ndarray, k: int) -> np.ndarray:
    """Distance to the k-th nearest other point, for every point."""
    n = points.shape[0]
    all_sq = np.einsum("ij,ij->i", points, points)
    out = np.empty(n, dtype=np.float64)
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        block = points[start:stop]
        block_sq = all_sq[start:stop]
        if k == 1:
            # row-shifted squared distances: ||x-y||^2 - ||x||^2, so the
            # per-row norm is added only after the row min
            e = (-2.0 * block) @ points.T
            e += all_sq[None, :]
            e[np.arange(stop - start), np.arange(start, stop)] = np.inf
            d2 = e.min(axis=1) + block_sq
            out[start:stop] = np.sqrt(np.maximum(d2, 0.0))
        else:
            d2 = block_sq[:, None] + all_sq[None, :] - 2.0 * (block @ points.T)
            np.maximum(d2, 0.0, out=d2)
            # k-th nearest excluding self: the self-distance 0 is always
            # among the k+1 smallest, so take index k after partial sorting
            part = np.partition(d2, k, axis=1)[:, : k + 1]
            part.sort(axis=1)
            out[start:stop] = np.sqrt(part[:, k])
    return out


def core_distance(
    store: FeatureStore, object_id: str, k: int, candidates: Iterable[str]
) -> float:
    """Distance from one object to its k-th nearest other candidate."""
    cand = sorted(set(candidates))
    if object_id not in cand:
        raise ValueError(f"{object_id!r} not among candidates")
    if len(cand) <= k:
        raise InsufficientPointsError(
            f"need more than k={k} candidates, got {len(cand)}"
        )
    pts = store.matrix(cand).astype(np.float64)
    me = store.vector(object_id).astype(np.float64)
    d = np.sqrt(np.maximum(((pts - me) ** 2).sum(axis=1), 0.0))
    d = np.delete(d, cand.index(object_id))
    d.sort()
    return float(d[k - 1])


def mutual_reachability(
    store: FeatureStore, a: str, b: str, k: int, candidates: Iterable[str]
) -> float:
    """max(core_k(a), core_k(b), d(a, b)); a symmetric density-aware distance."""
    from .store import euclidean_distance

    cand = sorted(set(candidates))
    ca = core_distance(store, a, k, cand)
    cb = core_distance(store, b, k, cand)
    dab = euclidean_distance(store.vector(a), store.vector(b))
    return max(ca, cb, dab)


# -- minimum spanning tree ----------------------------------------------------


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _mst_prim(points: np.ndarray, core: np.ndarray) -> list[tuple[int, int, float]]:
    """MST over the mutual-reachability graph, weights computed on the fly.

    Ties are broken by the lexicographically smallest (min_index, max_index)
    edge so the result is deterministic.
    """
    n = points.shape[0]
    all_sq = np.einsum("ij,ij->i", points, points)
    in_tree = np.zeros(n, dtype=bool)
    best_w = np.full(n, np.inf)
    best_from = np.full(n, -1, dtype=np.int64)

    edges: list[tuple[int, int, float]] = []
    current = 0
    in_tree[0] = True
    for _ in range(n - 1):
        p = points[current]
        d = np.sqrt(np.maximum(all_sq + float(p @ p) - 2.0 * (points @ p), 0.0))
        w = np.maximum(np.maximum(d, core), core[current])
        better = w < best_w
        tie = w == best_w
        if tie.any():
            for v in np.nonzero(tie)[0]:
                v = int(v)
                if not in_tree[v] and _edge_key(current, v) < _edge_key(
                    int(best_from[v]), v
                ):
                    better[v] = True
        better &= ~in_tree
        best_w[better] = w[better]
        best_from[better] = current

        masked = np.where(in_tree, np.inf, best_w)
        lowest = masked.min()
        choices = np.nonzero(masked == lowest)[0]
        nxt = int(choices[0])
        if len(choices) > 1:
            key = _edge_key(int(best_from[nxt]), nxt)
            for v in choices[1:]:
                alt = _edge_key(int(best_from[int(v)]), int(v))
                if alt < key:
                    key, nxt = alt, int(v)
        edges.append((int(best_from[nxt]), nxt, float(best_w[nxt])))
        in_tree[nxt] = True
        current = nxt
    return edges


def build_mst(
    store: FeatureStore, candidates: Iterable[str], k: int
) -> list[tuple[str, str, float]]:
    """Spanning tree of the candidates minimizing total mutual-reachability weight."""
    cand = sorted(set(candidates))
    if len(cand) < 2:
        raise InsufficientPointsError(f"need >= 2 candidates, got {len(cand)}")
    if len(cand) <= k:
        raise InsufficientPointsError(
            f"need more than k={k} candidates, got {len(cand)}"
        )
    pts = store.matrix(cand).astype(np.float64)
    core = _core_distances(pts, k)
    return [(cand[a], cand[b], w) for a, b, w in _mst_prim(pts, core)]


# -- single linkage and condensation ------------------------------------------


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(2 * n - 1))
        self.size = [1] * n + [0] * (n - 1)
        self.next_label = n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        label = self.next_label
        self.next_label += 1
        self.parent[a] = label
        self.parent[b] = label
        self.size[label] = self.size[a] + self.size[b]
        return label


def _single_linkage(n: int, edges: Sequence[tuple[int, int, float]]):
    """Binary dendrogram from ascending-weight edge insertion.

    Leaves are 0..n-1, internal nodes n..2n-2 in creation order; equal-weight
    edges are inserted in (weight, min_id, max_id) order.
    """
    order = sorted(edges, key=lambda e: (e[2], *_edge_key(e[0], e[1])))
    uf = _UnionFind(n)
    children: list[tuple[int, int]] = []
    heights: list[float] = []
    for a, b, w in order:
        ra, rb = uf.find(a), uf.find(b)
        uf.union(ra, rb)
        children.append((ra, rb))
        heights.append(w)
    return children, heights


def _subtree_sizes(n: int, children: list[tuple[int, int]]) -> list[int]:
    sizes = [1] * n + [0] * len(children)
    for i, (a, b) in enumerate(children):
        sizes[n + i] = sizes[a] + sizes[b]
    return sizes


def _leaves_of(node: int, n: int, children: list[tuple[int, int]]) -> list[int]:
    out: list[int] = []
    stack = [node]
    while stack:
        x = stack.pop()
        if x < n:
            out.append(x)
        else:
            stack.extend(children[x - n])
    return out


def _lam(weight: float) -> float:
    return math.inf if weight <= 0.0 else 1.0 / weight


def _lam_minus(a: float, b: float) -> float:
    if math.isinf(a) and math.isinf(b):
        return 0.0
    return a - b


def condense_tree(mst: Sequence[tuple], m: int) -> CondensedTreeNode:
    """Condense the single-linkage hierarchy of an MST edge list.

    Walking the dendrogram top-down, a split where both sides hold at least
    m points creates two child nodes; smaller sides fall out of the current
    node as individual points at the split's lambda (1/distance).
    Stabilities are filled in for every node.
    """
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    ids = sorted({e[0] for e in mst} | {e[1] for e in mst})
    index = {p: i for i, p in enumerate(ids)}
    n = len(ids)
    if len(mst) != n - 1:
        raise ValueError(f"{len(mst)} edges do not span {n} points")
    edges = [(index[a], index[b], float(w)) for a, b, w in mst]

    children, heights = _single_linkage(n, edges)
    sizes = _subtree_sizes(n, children)

    next_id = 0

    def new_node(parent: CondensedTreeNode | None, lam: float) -> CondensedTreeNode:
        nonlocal next_id
        node = CondensedTreeNode(
            node_id=next_id,
            parent_id=None if parent is None else parent.node_id,
            lambda_birth=lam,
        )
        next_id += 1
        if parent is not None:
            parent.child_nodes.append(node)
        return node

    root = new_node(None, 0.0)
    sl_root = n + len(children) - 1
    stack: list[tuple[int, CondensedTreeNode]] = [(sl_root, root)]
    while stack:
        sl_node, cnode = stack.pop()
        a, b = children[sl_node - n]
        lam = _lam(heights[sl_node - n])
        big_a, big_b = sizes[a] >= m, sizes[b] >= m
        if big_a and big_b:
            stack.append((a, new_node(cnode, lam)))
            stack.append((b, new_node(cnode, lam)))
        elif big_a or big_b:
            small, big = (b, a) if big_a else (a, b)
            for leaf in _leaves_of(small, n, children):
                cnode.point_members.append((ids[leaf], lam))
            stack.append((big, cnode))
        else:
            for leaf in _leaves_of(a, n, children):
                cnode.point_members.append((ids[leaf], lam))
            for leaf in _leaves_of(b, n, children):
                cnode.point_members.append((ids[leaf], lam))

    _fill_stability(root)
    return root


def _fill_stability(root: CondensedTreeNode) -> None:
    """Compute stability and lambda_death bottom-up.

    A node's stability sums, over every point it ever held, the lambda at
    which the point left it (individually or via a split into a child)
    minus the node's birth lambda; coincident infinite levels cancel.
    """
    for node in _postorder(root):
        stab = 0.0
        death = node.lambda_birth
        for _, lam in node.point_members:
            stab += _lam_minus(lam, node.lambda_birth)
            death = max(death, lam)
        for child in node.child_nodes:
            stab += child.size() * _lam_minus(child.lambda_birth, node.lambda_birth)
            death = max(death, child.lambda_birth)
        node.stability = stab
        node.lambda_death = death


def _postorder(root: CondensedTreeNode) -> list[CondensedTreeNode]:
    order: list[CondensedTreeNode] = []
    stack = [root]
    while stack:
        node = stack.pop()
        order.append(node)
        stack.extend(node.child_nodes)
    order.reverse()
    return order


def extract_seeds(root: CondensedTreeNode, m: int) -> SeedSet:
    """Excess-of-mass selection over the condensed tree.

    A node is selected iff its own stability exceeds the propagated
    stability of its children; the root is never selected.  A selected
    node's seed holds every point the node ever contained; all points not
    under a selected node are noise.
    """
    propagated: dict[int, float] = {}
    selected: dict[int, bool] = {}
    for node in _postorder(root):
        child_total = sum(propagated[c.node_id] for c in node.child_nodes)
        if node.parent_id is None:
            selected[node.node_id] = False
            propagated[node.node_id] = max(node.stability, child_total)
        elif node.stability > child_total:
            selected[node.node_id] = True
            propagated[node.node_id] = node.stability
        else:
            selected[node.node_id] = False
            propagated[node.node_id] = child_total

    member_lists: list[list] = []
    noise: list = []

    def walk(node: CondensedTreeNode) -> None:
        if selected[node.node_id]:
            member_lists.append(sorted(node.all_points()))
            return
        noise.extend(p for p, _ in node.point_members)
        for child in node.child_nodes:
            walk(child)

    walk(root)
    member_lists.sort(key=lambda members: members[0])
    seeds = [(f"s{i}", members) for i, members in enumerate(member_lists)]
    return SeedSet(seeds=seeds, noise=sorted(noise))


def cluster_unassigned(
    store: FeatureStore, unassigned: Iterable[str], params: ClusteringParams
) -> SeedSet:
    """Full seed-extraction pass over the unassigned objects.

    Composition of core distances, mutual reachability, MST, condensation,
    and excess-of-mass selection, restricted to ``unassigned``.
    """
    cand = sorted(set(unassigned))
    if len(cand) < params.m:
        raise InsufficientPointsError(
            f"{len(cand)} unassigned objects < minimum cluster size {params.m}"
        )
    if len(cand) <= params.k:
        raise InsufficientPointsError(
            f"{len(cand)} unassigned objects <= neighborhood size {params.k}"
        )
    pts = store.matrix(cand).astype(np.float64)
    core = _core_distances(pts, params.k)
    mst = [(cand[a], cand[b], w) for a, b, w in _mst_prim(pts, core)]
    root = condense_tree(mst, params.m)
    return extract_seeds(root, params.m)
