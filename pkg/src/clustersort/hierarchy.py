"""Nameable hierarchy over grown clusters.

The starting tree comes from average-linkage (UPGMA) agglomeration of the
cluster centroids; every merge joins the two active groups with the smallest
mean pairwise centroid distance.  The annotator then merges, moves, and
renames nodes; names propagate to objects as slash-joined paths, with
unnamed nodes transparent.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import StructureError
from .lifecycle import Cluster

PATH_SEPARATOR = "/"
UNNAMED_PATH = "unnamed"


@dataclass
class HierarchyNode:
    node_id: str
    parent: str | None = None
    children: list[str] = field(default_factory=list)
    cluster_refs: list[str] = field(default_factory=list)
    name: str | None = None
    merge_height: float = 0.0

    @property
    def cluster_ref(self) -> str | None:
        """Sole cluster reference of a freshly built leaf."""
        return self.cluster_refs[0] if len(self.cluster_refs) == 1 else None

    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class Hierarchy:
    """A rooted tree of HierarchyNodes, indexed by node id."""

    nodes: dict[str, HierarchyNode]
    root_id: str

    @property
    def root(self) -> HierarchyNode:
        return self.nodes[self.root_id]

    def node(self, node_id: str) -> HierarchyNode:
        if node_id not in self.nodes:
            raise KeyError(f"unknown node {node_id!r}")
        return self.nodes[node_id]

    def is_ancestor(self, a: str, b: str) -> bool:
        """True when a lies on the path from b to the root (a != b)."""
        cur = self.nodes[b].parent
        while cur is not None:
            if cur == a:
                return True
            cur = self.nodes[cur].parent
        return False

    def subtree(self, node_id: str) -> list[str]:
        out: list[str] = []
        stack = [node_id]
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(self.nodes[nid].children)
        return out

    def leaf_cluster_ids(self) -> list[str]:
        return sorted(
            ref for nid in self.subtree(self.root_id) for ref in self.nodes[nid].cluster_refs
        )


@dataclass
class Labeling:
    """Final object -> path assignment plus the residual unassigned ids."""

    assignments: dict[str, str]
    unassigned: set[str]


def build_upgma(centroids: dict[str, np.ndarray]) -> Hierarchy:
    """Average-linkage agglomeration of cluster centroids.

    Groups are merged pairwise by minimal mean inter-group centroid
    distance; the merge height is that mean.  Ties break on the pair with
    the lexicographically smallest (representative_a, representative_b),
    where a group's representative is its smallest member cluster id, so
    the dendrogram is independent of input order.
    """
    if not centroids:
        raise ValueError("at least one centroid required")
    cluster_ids = sorted(centroids)
    vecs = np.asarray([np.asarray(centroids[c], dtype=np.float64) for c in cluster_ids])

    nodes: dict[str, HierarchyNode] = {}
    next_id = 0

    def new_node() -> HierarchyNode:
        nonlocal next_id
        node = HierarchyNode(node_id=f"n{next_id}")
        next_id += 1
        nodes[node.node_id] = node
        return node

    n = len(cluster_ids)
    # slot state: slot i starts as leaf i and is reused for merged groups
    slot_node: list[str] = []
    slot_size = np.ones(n)
    slot_rep: list[str] = list(cluster_ids)
    alive = np.ones(n, dtype=bool)
    for cid in cluster_ids:
        leaf = new_node()
        leaf.cluster_refs = [cid]
        slot_node.append(leaf.node_id)

    if n == 1:
        return Hierarchy(nodes=nodes, root_id=slot_node[0])

    # mean inter-group distance matrix, maintained by the size-weighted
    # average-linkage update
    diff = vecs[:, None, :] - vecs[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)

    for _ in range(n - 1):
        masked = np.where(alive[:, None] & alive[None, :], dist, np.inf)
        height = float(masked.min())
        ties = np.argwhere(masked == height)
        best_pair: tuple[str, str] | None = None
        best_ij: tuple[int, int] = (-1, -1)
        for i, j in ties:
            if i >= j:
                continue
            pair = tuple(sorted((slot_rep[i], slot_rep[j])))
            if best_pair is None or pair < best_pair:
                best_pair = pair  # type: ignore[assignment]
                best_ij = (int(i), int(j))
        i, j = best_ij

        parent = new_node()
        parent.children = [slot_node[i], slot_node[j]]
        parent.merge_height = height
        nodes[slot_node[i]].parent = parent.node_id
        nodes[slot_node[j]].parent = parent.node_id

        si, sj = slot_size[i], slot_size[j]
        merged = (si * dist[i] + sj * dist[j]) / (si + sj)
        dist[i] = merged
        dist[:, i] = merged
        dist[i, i] = np.inf
        alive[j] = False
        slot_node[i] = parent.node_id
        slot_size[i] = si + sj
        slot_rep[i] = min(slot_rep[i], slot_rep[j])

    root_slot = int(np.nonzero(alive)[0][0])
    return Hierarchy(nodes=nodes, root_id=slot_node[root_slot])


def merge_nodes(tree: Hierarchy, a: str, b: str) -> Hierarchy:
    """Fold node b into node a: b's clusters and children move under a."""
    if a == b:
        raise StructureError("cannot merge a node into itself")
    node_a, node_b = tree.node(a), tree.node(b)
    if tree.is_ancestor(a, b) or tree.is_ancestor(b, a):
        raise StructureError(f"{a!r} and {b!r} are in an ancestor relation")
    for child_id in node_b.children:
        tree.nodes[child_id].parent = a
        node_a.children.append(child_id)
    node_a.cluster_refs.extend(node_b.cluster_refs)
    parent = node_b.parent
    if parent is not None:
        tree.nodes[parent].children.remove(b)
    del tree.nodes[b]
    return tree


def move_node(tree: Hierarchy, node_id: str, new_parent: str) -> Hierarchy:
    """Re-parent a node; refuses moves that would create a cycle."""
    node = tree.node(node_id)
    tree.node(new_parent)
    if node_id == new_parent or tree.is_ancestor(node_id, new_parent):
        raise StructureError(f"{new_parent!r} is inside the subtree of {node_id!r}")
    if node.parent is None:
        raise StructureError("cannot move the root")
    tree.nodes[node.parent].children.remove(node_id)
    node.parent = new_parent
    tree.nodes[new_parent].children.append(node_id)
    return tree


def rename_node(tree: Hierarchy, node_id: str, name: str) -> Hierarchy:
    """Set a node's name (overwriting allowed); names may not contain '/'."""
    if not name:
        raise ValueError("name must be nonempty")
    if PATH_SEPARATOR in name:
        raise ValueError(f"name may not contain {PATH_SEPARATOR!r}: {name!r}")
    tree.node(node_id).name = name
    return tree


def node_path(tree: Hierarchy, node_id: str) -> str:
    """Slash-joined names of the node's named ancestors, root to node."""
    names: list[str] = []
    cur: str | None = node_id
    while cur is not None:
        node = tree.nodes[cur]
        if node.name:
            names.append(node.name)
        cur = node.parent
    names.reverse()
    return PATH_SEPARATOR.join(names) if names else UNNAMED_PATH


def export_labeling(tree: Hierarchy, clusters: dict[str, Cluster]) -> Labeling:
    """Transfer node names to objects.

    Each object of every attached cluster is labeled with the path of the
    node holding the cluster; objects of clusters not in the tree (and any
    other residuals the caller tracks) stay unassigned.
    """
    assignments: dict[str, str] = {}
    placed: set[str] = set()
    for nid in tree.subtree(tree.root_id):
        path = node_path(tree, nid)
        for cid in tree.nodes[nid].cluster_refs:
            placed.add(cid)
            for obj in clusters[cid].members:
                assignments[obj] = path
    unassigned = {
        obj
        for cid, cluster in clusters.items()
        if cid not in placed
        for obj in cluster.members
    }
    return Labeling(assignments=assignments, unassigned=unassigned)


def labeling_csv(labeling: Labeling, residuals: set[str] = frozenset()) -> str:
    """Render a labeling as CSV ``object_id,label_path`` sorted by object id.

    Residual objects (never assigned to any cluster) are included with an
    empty label_path.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["object_id", "label_path"])
    rows = dict.fromkeys(labeling.unassigned | set(residuals), "")
    rows.update(labeling.assignments)
    for oid in sorted(rows):
        writer.writerow([oid, rows[oid]])
    return buf.getvalue()


def tree_stats(tree: Hierarchy) -> tuple[int, int, int]:
    """(node count, depth in levels, named node count)."""
    node_count = 0
    named = 0
    depth = 0
    stack = [(tree.root_id, 1)]
    while stack:
        nid, level = stack.pop()
        node = tree.nodes[nid]
        node_count += 1
        depth = max(depth, level)
        if node.name:
            named += 1
        stack.extend((c, level + 1) for c in node.children)
    return node_count, depth, named
