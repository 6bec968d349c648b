"""Distil an approximated Delaunay graph into connected components.

The minimum spanning forest of the graph (raw Euclidean edge lengths, no
mutual-reachability transform) is turned into a single-linkage dendrogram,
condensed with a minimum cluster size and cut by excess of mass. Each
connected component of the input graph is condensed on its own.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .delaunay import ApproxDelaunayGraph
from .exceptions import DistillationError, InvalidMcs


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root


def minimum_spanning_forest(g: ApproxDelaunayGraph) -> np.ndarray:
    """Kruskal over the graph edges; returns edge indices in processing order.

    Ties in length are broken by the ``(i, j)`` pair, so the forest is unique.
    """
    order = np.lexsort((g.edges[:, 1], g.edges[:, 0], g.lengths))
    uf = _UnionFind(g.n_vertices)
    chosen = []
    for k, i, j in zip(order.tolist(), g.edges[order, 0].tolist(), g.edges[order, 1].tolist()):
        ri, rj = uf.find(i), uf.find(j)
        if ri != rj:
            uf.parent[ri] = rj
            chosen.append(k)
            if len(chosen) == g.n_vertices - 1:
                break
    return np.asarray(chosen, dtype=np.int64)


@dataclass(frozen=True)
class Dendrogram:
    """Single-linkage merges. Leaves are ``0..n-1``; merge ``k`` creates node ``n + k``."""

    n_points: int
    left: np.ndarray
    right: np.ndarray
    distance: np.ndarray
    size: np.ndarray
    roots: tuple

    def node_size(self, node: int) -> int:
        return 1 if node < self.n_points else int(self.size[node - self.n_points])

    def leaves(self, node: int) -> list:
        n = self.n_points
        out, stack = [], [node]
        while stack:
            x = stack.pop()
            if x < n:
                out.append(x)
            else:
                stack.append(int(self.left[x - n]))
                stack.append(int(self.right[x - n]))
        return out


def build_dendrogram(g: ApproxDelaunayGraph, forest=None) -> Dendrogram:
    if forest is None:
        forest = minimum_spanning_forest(g)
    n = g.n_vertices
    m = len(forest)
    uf = _UnionFind(n + m)
    left = np.empty(m, dtype=np.int64)
    right = np.empty(m, dtype=np.int64)
    size = np.empty(m, dtype=np.int64)
    sizes = [1] * (n + m)
    for k, e in enumerate(forest.tolist()):
        a, b = uf.find(int(g.edges[e, 0])), uf.find(int(g.edges[e, 1]))
        node = n + k
        left[k], right[k] = a, b
        sizes[node] = sizes[a] + sizes[b]
        size[k] = sizes[node]
        uf.parent[a] = uf.parent[b] = node
    roots = tuple(sorted({uf.find(x) for x in range(n)}))
    return Dendrogram(n, left, right, g.lengths[forest].astype(np.float64), size, roots)


@dataclass(frozen=True)
class CondensedTree:
    """Condensed hierarchy in the usual ``(parent, child, lambda, child_size)`` form.

    Cluster labels start at ``n_points``; a child below ``n_points`` is a point
    leaving ``parent`` at ``lambda_val``.
    """

    n_points: int
    parent: np.ndarray
    child: np.ndarray
    lambda_val: np.ndarray
    child_size: np.ndarray
    birth: dict

    @property
    def clusters(self) -> list:
        return sorted(self.birth)

    def stability(self) -> dict:
        stab = {c: 0.0 for c in self.birth}
        for p, lam, s in zip(self.parent.tolist(), self.lambda_val.tolist(), self.child_size.tolist()):
            stab[p] += (lam - self.birth[p]) * s
        return stab

    def cluster_children(self) -> dict:
        kids = {c: [] for c in self.birth}
        for p, c in zip(self.parent.tolist(), self.child.tolist()):
            if c >= self.n_points:
                kids[p].append(c)
        return kids


def _to_lambda(distance: float) -> float:
    return np.inf if distance == 0 else 1.0 / distance


def condense_tree(dendro: Dendrogram, mcs: int) -> CondensedTree:
    n = dendro.n_points
    parent, child, lam_val, child_size = [], [], [], []
    birth = {}
    next_label = n

    def emit(p, c, lam, s):
        parent.append(p)
        child.append(c)
        lam_val.append(lam)
        child_size.append(s)

    for root in dendro.roots:
        if dendro.node_size(root) < mcs:
            continue
        birth[next_label] = 0.0
        relabel = {root: next_label}
        next_label += 1
        stack = [root]
        while stack:
            node = stack.pop()
            label = relabel[node]
            k = node - n
            a, b = int(dendro.left[k]), int(dendro.right[k])
            lam = _to_lambda(dendro.distance[k])
            sa, sb = dendro.node_size(a), dendro.node_size(b)
            if sa >= mcs and sb >= mcs:
                for c, s in ((a, sa), (b, sb)):
                    relabel[c] = next_label
                    birth[next_label] = lam
                    emit(label, next_label, lam, s)
                    next_label += 1
                    stack.append(c)
            elif sa < mcs and sb < mcs:
                for leaf in dendro.leaves(a) + dendro.leaves(b):
                    emit(label, leaf, lam, 1)
            else:
                big, small = (a, b) if sa >= mcs else (b, a)
                for leaf in dendro.leaves(small):
                    emit(label, leaf, lam, 1)
                relabel[big] = label
                stack.append(big)
    return CondensedTree(
        n_points=n,
        parent=np.asarray(parent, dtype=np.int64),
        child=np.asarray(child, dtype=np.int64),
        lambda_val=np.asarray(lam_val, dtype=np.float64),
        child_size=np.asarray(child_size, dtype=np.int64),
        birth=birth,
    )


def select_clusters(tree: CondensedTree) -> list:
    """Excess-of-mass selection; a parent wins ties against its descendants."""
    stab = tree.stability()
    kids = tree.cluster_children()
    selected = {}
    for c in sorted(tree.birth, reverse=True):
        sub = sum(stab[k] for k in kids[c])
        if not kids[c] or stab[c] >= sub:
            selected[c] = True
            stack = list(kids[c])
            while stack:
                d = stack.pop()
                selected[d] = False
                stack.extend(kids[d])
        else:
            selected[c] = False
            stab[c] = sub
    return sorted(c for c, keep in selected.items() if keep)


def _label_points(tree: CondensedTree, chosen: list) -> np.ndarray:
    n = tree.n_points
    up = {c: p for p, c in zip(tree.parent.tolist(), tree.child.tolist()) if c >= n}
    chosen = set(chosen)
    owner = {}

    def selected_ancestor(c):
        path, found = [], -1
        while True:
            if c in owner:
                found = owner[c]
                break
            path.append(c)
            if c in chosen:
                found = c
                break
            if c not in up:
                break
            c = up[c]
        for x in path:
            owner[x] = found
        return found

    labels = np.full(n, -1, dtype=np.int64)
    for p, c in zip(tree.parent.tolist(), tree.child.tolist()):
        if c < n:
            labels[c] = selected_ancestor(p)
    return labels


@dataclass(frozen=True)
class DistilledGraph:
    """Components of the distilled graph. ``labels[v]`` is a component index or -1."""

    graph: ApproxDelaunayGraph
    mcs: int
    labels: np.ndarray
    components: list
    component_edges: list
    condensed_tree: CondensedTree = field(default=None, repr=False, compare=False)

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def outliers(self) -> np.ndarray:
        return np.flatnonzero(self.labels < 0)

    @property
    def edge_mask(self) -> np.ndarray:
        a, b = self.labels[self.graph.edges[:, 0]], self.labels[self.graph.edges[:, 1]]
        return (a == b) & (a >= 0)

    def to_json(self) -> dict:
        return {
            "mcs": self.mcs,
            "n_vertices": self.graph.n_vertices,
            "components": [
                {"index": k, "size": len(v), "n_edges": len(e), "vertices": v.tolist()}
                for k, (v, e) in enumerate(zip(self.components, self.component_edges))
            ],
            "outliers": self.outliers.tolist(),
        }


def _assemble(g: ApproxDelaunayGraph, raw_labels: np.ndarray, mcs: int, tree=None) -> DistilledGraph:
    """Order components by size (desc) then smallest id, and induce their edges."""
    groups = {}
    for v, lab in enumerate(raw_labels.tolist()):
        if lab >= 0:
            groups.setdefault(lab, []).append(v)
    ordered = sorted(groups.values(), key=lambda vs: (-len(vs), vs[0]))
    labels = np.full(g.n_vertices, -1, dtype=np.int64)
    for k, vs in enumerate(ordered):
        labels[vs] = k
    a, b = labels[g.edges[:, 0]], labels[g.edges[:, 1]]
    internal = (a == b) & (a >= 0)
    edge_ids = np.flatnonzero(internal)
    by_comp = [edge_ids[a[edge_ids] == k] for k in range(len(ordered))]
    return DistilledGraph(
        graph=g,
        mcs=mcs,
        labels=labels,
        components=[np.asarray(vs, dtype=np.int64) for vs in ordered],
        component_edges=by_comp,
        condensed_tree=tree,
    )


def _check_connected(dg: DistilledGraph) -> None:
    g = dg.graph
    mask = dg.edge_mask
    e = g.edges[mask]
    adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(g.n_vertices, g.n_vertices))
    _, cc = connected_components(adj, directed=False)
    for k, vs in enumerate(dg.components):
        if len(np.unique(cc[vs])) != 1:
            raise DistillationError(f"component {k} is not connected in the input graph")


def distill(g: ApproxDelaunayGraph, mcs: int = 10) -> DistilledGraph:
    """Cluster ``g`` into components of at least ``mcs`` vertices; the rest are outliers."""
    if int(mcs) != mcs or mcs < 2:
        raise InvalidMcs(f"minimum cluster size must be an integer >= 2, got {mcs}")
    mcs = int(mcs)
    dendro = build_dendrogram(g)
    tree = condense_tree(dendro, mcs)
    chosen = select_clusters(tree)
    dg = _assemble(g, _label_points(tree, chosen), mcs, tree)
    _check_connected(dg)
    return dg


def distilled_from_json(doc: dict, g: ApproxDelaunayGraph) -> DistilledGraph:
    if doc["n_vertices"] != g.n_vertices:
        raise ValueError("distillation does not match the graph")
    labels = np.full(g.n_vertices, -1, dtype=np.int64)
    for comp in doc["components"]:
        labels[comp["vertices"]] = comp["index"]
    return _assemble(g, labels, int(doc["mcs"]))
