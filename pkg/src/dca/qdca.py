"""Evaluation of individual query points against a distilled reference graph.

A query ``q`` is never added to the reference; rays are cast from ``q``
against the reference points only, and every neighbour found this way
becomes an edge of the query's neighbourhood. Three readings of that
neighbourhood are produced: the closest reference vertex, the length of
that edge, and an assignment to a fundamental component based on the
component's typical edge lengths.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .delaunay import (
    COVERAGE_TOL,
    STREAM_QUERY,
    ApproxDelaunayGraph,
    build_graph,
    cast_ray_stream,
    filter_by_sphere_coverage,
    load_graph,
    ray_generator,
    save_graph,
)
from .distill import DistilledGraph, distill, distilled_from_json
from .exceptions import DimMismatch, EmptyNeighborhood, InvalidCoverage, MissingArtifact
from .pointset_io import EVAL, PointSet
from .scores import score_components

logger = logging.getLogger(__name__)

OUTLIER = -1
UNASSIGNED = -1


@dataclass(frozen=True)
class ComponentEdgeStats:
    """Mean and population standard deviation of edge lengths per component."""

    mean: np.ndarray
    std: np.ndarray
    n_edges: np.ndarray

    @classmethod
    def from_distilled(cls, dg: DistilledGraph) -> "ComponentEdgeStats":
        k = dg.n_components
        mean, std = np.full(k, np.nan), np.full(k, np.nan)
        n_edges = np.zeros(k, dtype=np.int64)
        for c, eids in enumerate(dg.component_edges):
            if len(eids):
                lengths = dg.graph.lengths[eids]
                mean[c], std[c] = lengths.mean(), lengths.std()
                n_edges[c] = len(eids)
        return cls(mean, std, n_edges)

    @property
    def threshold(self) -> np.ndarray:
        return self.mean + self.std


@dataclass(frozen=True)
class QueryNeighborhood:
    query_id: int
    vertices: np.ndarray
    lengths: np.ndarray
    components: np.ndarray
    hits: np.ndarray
    rays: int

    def __len__(self) -> int:
        return len(self.vertices)

    def _closest(self) -> int:
        return int(np.lexsort((self.vertices, self.lengths))[0])

    @property
    def closest_vertex(self) -> int:
        return int(self.vertices[self._closest()])

    @property
    def closest_length(self) -> float:
        return float(self.lengths[self._closest()])


@dataclass(frozen=True)
class QueryVerdict:
    query_id: int
    closest_vertex: int
    closest_length: float
    closest_component: int
    typical: list
    conservative: int
    flexible: int

    def to_json(self) -> dict:
        def opt(k):
            return None if k < 0 else int(k)

        return {
            "id": self.query_id,
            "closest": {
                "vertex": self.closest_vertex,
                "length": self.closest_length,
                "component": opt(self.closest_component),
            },
            "assignment": {"conservative": opt(self.conservative), "flexible": opt(self.flexible)},
            "typical_edges": [
                {"component": int(c), "count": int(n), "min_length": float(m)} for c, n, m in self.typical
            ],
        }


@dataclass(frozen=True)
class ReferenceContext:
    """Everything a query needs: reference points, their graph and its distillation."""

    points: PointSet
    graph: ApproxDelaunayGraph
    distilled: DistilledGraph
    stats: ComponentEdgeStats
    fundamental: frozenset
    params: dict = field(default_factory=dict)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.savez(directory / "reference.npz", points=self.points.points, membership=self.points.membership)
        save_graph(self.graph, directory / "graph.dcag")
        (directory / "distilled.json").write_text(json.dumps(self.distilled.to_json()))
        stats = {
            "params": self.params,
            "components": [
                {
                    "index": k,
                    "mean": None if np.isnan(self.stats.mean[k]) else float(self.stats.mean[k]),
                    "std": None if np.isnan(self.stats.std[k]) else float(self.stats.std[k]),
                    "n_edges": int(self.stats.n_edges[k]),
                    "fundamental": k in self.fundamental,
                }
                for k in range(self.distilled.n_components)
            ],
        }
        (directory / "stats.json").write_text(json.dumps(stats, indent=2))

    @classmethod
    def load(cls, directory) -> "ReferenceContext":
        directory = Path(directory)
        needed = ["reference.npz", "graph.dcag", "distilled.json", "stats.json"]
        missing = [name for name in needed if not (directory / name).exists()]
        if missing:
            raise MissingArtifact(f"{directory}: missing {', '.join(missing)}")
        with np.load(directory / "reference.npz") as data:
            points = PointSet(data["points"], data["membership"])
        graph = load_graph(directory / "graph.dcag")
        dg = distilled_from_json(json.loads((directory / "distilled.json").read_text()), graph)
        doc = json.loads((directory / "stats.json").read_text())
        comps = doc["components"]
        stats = ComponentEdgeStats(
            mean=np.array([np.nan if c["mean"] is None else c["mean"] for c in comps], dtype=np.float64),
            std=np.array([np.nan if c["std"] is None else c["std"] for c in comps], dtype=np.float64),
            n_edges=np.array([c["n_edges"] for c in comps], dtype=np.int64),
        )
        fundamental = frozenset(c["index"] for c in comps if c["fundamental"])
        return cls(points, graph, dg, stats, fundamental, doc.get("params", {}))


def fundamental_components(dg: DistilledGraph, membership, eta_c=0.0, eta_q=0.0) -> frozenset:
    """Fundamental component indices; with no EVAL points every component qualifies."""
    membership = np.asarray(membership)
    if not np.any(membership == EVAL):
        return frozenset(range(dg.n_components))
    return frozenset(s.index for s in score_components(dg, membership, eta_c, eta_q) if s.is_fundamental)


def build_reference(
    points: PointSet,
    T: int = 10_000,
    B: float = 1.0,
    mcs: int = 10,
    eta_c: float = 0.0,
    eta_q: float = 0.0,
    seed: int = 0,
    workers: int = 1,
) -> ReferenceContext:
    graph = build_graph(points, T=T, seed=seed, workers=workers)
    if B < 1.0:
        graph = filter_by_sphere_coverage(graph, B)
    elif B != 1.0:
        raise InvalidCoverage(f"sphere coverage must lie in [0, 1], got {B}")
    return reference_from_graph(points, graph, mcs, eta_c, eta_q, params={"T": T, "B": B, "seed": seed})


def reference_from_graph(points, graph, mcs=10, eta_c=0.0, eta_q=0.0, params=None) -> ReferenceContext:
    dg = distill(graph, mcs)
    params = dict(params or {}, mcs=mcs, eta_c=eta_c, eta_q=eta_q)
    return ReferenceContext(
        points=points,
        graph=graph,
        distilled=dg,
        stats=ComponentEdgeStats.from_distilled(dg),
        fundamental=fundamental_components(dg, points.membership, eta_c, eta_q),
        params=params,
    )


def _filter_neighborhood(vertices, lengths, hits, T, B):
    order = np.lexsort((vertices, lengths))
    cum_before = np.cumsum(hits[order]) - hits[order]
    keep = np.zeros(len(vertices), dtype=bool)
    keep[order[cum_before / T <= min(B, hits.sum() / T - COVERAGE_TOL)]] = True
    return keep


def insert_query(q, context: ReferenceContext, T: int = 10_000, seed: int = 0, query_id: int = 0, B: float = 1.0) -> QueryNeighborhood:
    """Cast ``T`` rays from ``q`` against the reference points.

    The query's ray stream is keyed by ``(seed, query_id)`` so results do not
    depend on which other queries run alongside it.
    """
    pts = context.points.points
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.shape[0] != pts.shape[1]:
        raise DimMismatch(f"query has dim {q.shape[0]}, reference has dim {pts.shape[1]}")
    if not 0.0 <= B <= 1.0:
        raise InvalidCoverage(f"sphere coverage must lie in [0, 1], got {B}")
    rng = ray_generator(seed, STREAM_QUERY, query_id)
    _, target, _ = cast_ray_stream(q, pts, np.arange(len(pts)), T, rng)
    vertices, hits = np.unique(target[target >= 0], return_counts=True)
    lengths = np.linalg.norm(pts[vertices] - q, axis=1)
    if B < 1.0 and len(vertices):
        keep = _filter_neighborhood(vertices, lengths, hits, T, B)
        vertices, lengths, hits = vertices[keep], lengths[keep], hits[keep]
    return QueryNeighborhood(
        query_id=int(query_id),
        vertices=vertices.astype(np.int64),
        lengths=lengths,
        components=context.distilled.labels[vertices],
        hits=hits.astype(np.int64),
        rays=int(T),
    )


def evaluate_query(n: QueryNeighborhood, stats: ComponentEdgeStats, fundamental) -> QueryVerdict:
    """Apply the three processing options to one neighbourhood.

    An edge into fundamental component ``f`` is typical when its length is at
    most ``mean_f + std_f``, judged by the component it lands in. Conservative
    assignment needs every typical edge in one component. Flexible assignment
    also accepts the component holding the shortest typical edge when no
    other component has more typical edges.
    """
    if len(n) == 0:
        raise EmptyNeighborhood(f"query {n.query_id}: no bisector crossed by {n.rays} rays")
    best = n._closest()
    tally = {}
    thresholds = stats.threshold
    for comp, length in zip(n.components.tolist(), n.lengths.tolist()):
        if comp < 0 or comp not in fundamental or not length <= thresholds[comp]:
            continue
        count, shortest = tally.get(comp, (0, np.inf))
        tally[comp] = (count + 1, min(shortest, length))
    typical = sorted((c, cnt, m) for c, (cnt, m) in tally.items())

    conservative = flexible = UNASSIGNED
    if len(tally) == 1:
        conservative = flexible = next(iter(tally))
    elif tally:
        top = max(cnt for cnt, _ in tally.values())
        shortest_comp = min(tally, key=lambda c: (tally[c][1], c))
        if tally[shortest_comp][0] == top:
            flexible = shortest_comp
    return QueryVerdict(
        query_id=n.query_id,
        closest_vertex=int(n.vertices[best]),
        closest_length=float(n.lengths[best]),
        closest_component=int(n.components[best]),
        typical=typical,
        conservative=conservative,
        flexible=flexible,
    )


def evaluate_queries(
    queries, context: ReferenceContext, T=10_000, seed=0, B=1.0, workers=1, first_id=0, errors="raise"
) -> list:
    """Insert and evaluate every row of ``queries``; query ``k`` gets id ``first_id + k``.

    With ``errors="return"`` a query whose neighbourhood comes back empty
    yields its :class:`EmptyNeighborhood` exception in place of a verdict.
    """
    Q = queries.points if isinstance(queries, PointSet) else np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if Q.shape[1] != context.points.dim:
        raise DimMismatch(f"queries have dim {Q.shape[1]}, reference has dim {context.points.dim}")

    def one(k):
        nb = insert_query(Q[k], context, T=T, seed=seed, query_id=first_id + k, B=B)
        try:
            return evaluate_query(nb, context.stats, context.fundamental)
        except EmptyNeighborhood as exc:
            if errors == "return":
                return exc
            raise

    if workers > 1:
        with threadpool_limits(limits=1), ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(len(Q))))
    return [one(k) for k in range(len(Q))]
