"""Scikit-learn style front end for the DCA pipeline.

:class:`DelaunayComponentAnalysis` runs the full pipeline on a reference set
and an evaluation set. :class:`QueryDelaunayComponentAnalysis` fits the
reference graph once and then scores individual query points.
"""
from __future__ import annotations

import logging
import os
import time

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .delaunay import build_graph, filter_by_sphere_coverage
from .distill import distill
from .exceptions import EmptyInput, InvalidCoverage, InvalidMcs
from .pointset_io import EVAL, REF, PointSet, merge
from .qdca import OUTLIER, UNASSIGNED, build_reference, evaluate_queries
from .scores import score_components, score_global

logger = logging.getLogger(__name__)


def default_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover - non-Linux
        return max(1, os.cpu_count() or 1)


def _resolve_workers(n_jobs) -> int:
    if n_jobs is None:
        return 1
    if n_jobs < 0:
        return max(1, default_workers() + 1 + n_jobs)
    return max(1, int(n_jobs))


def _validate_common(est) -> None:
    if not 0.0 <= est.sphere_coverage <= 1.0:
        raise InvalidCoverage(f"sphere_coverage must lie in [0, 1], got {est.sphere_coverage}")
    if int(est.min_cluster_size) != est.min_cluster_size or est.min_cluster_size < 2:
        raise InvalidMcs(f"min_cluster_size must be an integer >= 2, got {est.min_cluster_size}")
    if int(est.n_rays) != est.n_rays or est.n_rays < 1:
        raise ValueError(f"n_rays must be a positive integer, got {est.n_rays}")


def _as_points(X, name):
    X = check_array(X, dtype=np.float64, ensure_min_samples=0, ensure_all_finite=True, input_name=name)
    if len(X) == 0:
        raise EmptyInput(f"{name} has no points")
    return X


class DelaunayComponentAnalysis(ClusterMixin, BaseEstimator):
    """Compare a reference and an evaluation point set through their joint Delaunay graph.

    Parameters
    ----------
    n_rays : int, default=10000
        Rays cast from every vertex when approximating the Delaunay graph.
    sphere_coverage : float, default=1.0
        Keep, per vertex, only the shortest edges covering this fraction of
        directions. ``1.0`` disables the filter.
    min_cluster_size : int, default=10
        Smallest group of vertices that counts as a component.
    eta_c, eta_q : float, default=0.0
        Consistency and quality thresholds for a component to be fundamental.
    random_state : int, default=0
        Seed for the ray directions.
    n_jobs : int or None, default=None
        Worker threads for ray casting; ``-1`` uses every available core.

    Attributes
    ----------
    graph_ : ApproxDelaunayGraph
        Approximated (and possibly filtered) graph over ``R`` followed by ``E``.
    distilled_ : DistilledGraph
    labels_ : ndarray of shape (n_R + n_E,)
        Component index per point, ``-1`` for outliers.
    membership_ : ndarray of shape (n_R + n_E,)
        ``0`` for reference points, ``1`` for evaluation points.
    component_scores_ : list of ComponentScore
    scores_ : GlobalScores
    timings_ : dict
        Wall-clock seconds per phase.
    """

    def __init__(
        self,
        n_rays=10_000,
        sphere_coverage=1.0,
        min_cluster_size=10,
        eta_c=0.0,
        eta_q=0.0,
        random_state=0,
        n_jobs=None,
    ):
        self.n_rays = n_rays
        self.sphere_coverage = sphere_coverage
        self.min_cluster_size = min_cluster_size
        self.eta_c = eta_c
        self.eta_q = eta_q
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        """Fit on stacked points ``X`` with membership ``y`` (0 = REF, 1 = EVAL)."""
        X = _as_points(X, "X")
        if y is None:
            y = np.zeros(len(X), dtype=np.uint8)
        y = np.asarray(y)
        if y.shape != (len(X),) or not np.isin(y, (REF, EVAL)).all():
            raise ValueError("y must be a membership vector of 0 (REF) and 1 (EVAL) per row of X")
        return self._fit_pointset(PointSet(X, y.astype(np.uint8)))

    def fit_sets(self, R, E):
        """Fit on separate reference and evaluation arrays (or PointSets)."""
        R = R if isinstance(R, PointSet) else PointSet.tagged(_as_points(R, "R"), REF)
        E = E if isinstance(E, PointSet) else PointSet.tagged(_as_points(E, "E"), EVAL)
        return self._fit_pointset(merge(R, E))

    def _fit_pointset(self, ps: PointSet):
        _validate_common(self)
        workers = _resolve_workers(self.n_jobs)
        timings = {}
        t0 = time.perf_counter()
        graph = build_graph(ps.points, T=int(self.n_rays), seed=self.random_state, workers=workers)
        t1 = time.perf_counter()
        timings["approx_graph"] = t1 - t0
        if self.sphere_coverage < 1.0:
            graph = filter_by_sphere_coverage(graph, self.sphere_coverage)
        t2 = time.perf_counter()
        timings["filter_graph"] = t2 - t1
        dg = distill(graph, int(self.min_cluster_size))
        t3 = time.perf_counter()
        timings["distill"] = t3 - t2
        comps = score_components(dg, ps.membership, self.eta_c, self.eta_q)
        glob = score_global(dg, ps.membership, comps, self.eta_c, self.eta_q)
        t4 = time.perf_counter()
        timings["analyse"] = t4 - t3
        timings["total"] = t4 - t0

        self.points_ = ps
        self.membership_ = ps.membership
        self.graph_ = graph
        self.distilled_ = dg
        self.labels_ = dg.labels
        self.component_scores_ = comps
        self.scores_ = glob
        self.timings_ = timings
        self.n_features_in_ = ps.dim
        logger.info(
            "fitted %d points: %d components, %d fundamental, P=%.4f R=%.4f",
            len(ps), glob.num_components, glob.num_fundamental, glob.precision, glob.recall,
        )
        return self

    def fit_predict(self, X, y=None, **kwargs):
        return self.fit(X, y).labels_

    @property
    def precision_(self) -> float:
        check_is_fitted(self, "scores_")
        return self.scores_.precision

    @property
    def recall_(self) -> float:
        check_is_fitted(self, "scores_")
        return self.scores_.recall

    def report(self) -> dict:
        """JSON-ready report: global scores, per-component scores, parameters and timings."""
        check_is_fitted(self, "scores_")
        return {
            "global": self.scores_.to_json(),
            "components": [c.to_json() for c in self.component_scores_],
            "params": {
                "T": int(self.n_rays),
                "B": float(self.sphere_coverage),
                "mcs": int(self.min_cluster_size),
                "eta_c": float(self.eta_c),
                "eta_q": float(self.eta_q),
                "seed": self.random_state,
                "n_ref": self.points_.n_ref,
                "n_eval": self.points_.n_eval,
                "n_edges": self.graph_.n_edges,
            },
            "timings": dict(self.timings_),
        }


class QueryDelaunayComponentAnalysis(BaseEstimator):
    """Fit a reference graph, then evaluate query points one at a time.

    ``predict`` returns component indices (``-1`` when unassigned) under the
    chosen strategy; ``transform`` returns the closest-edge length of each
    query, which grows as a query moves away from the reference data.
    """

    def __init__(
        self,
        n_rays=10_000,
        sphere_coverage=1.0,
        min_cluster_size=10,
        eta_c=0.0,
        eta_q=0.0,
        strategy="conservative",
        random_state=0,
        n_jobs=None,
    ):
        self.n_rays = n_rays
        self.sphere_coverage = sphere_coverage
        self.min_cluster_size = min_cluster_size
        self.eta_c = eta_c
        self.eta_q = eta_q
        self.strategy = strategy
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        """Build the reference from ``X``; ``y`` optionally tags rows as REF (0) or EVAL (1)."""
        _validate_common(self)
        X = _as_points(X, "X")
        membership = np.zeros(len(X), dtype=np.uint8) if y is None else np.asarray(y, dtype=np.uint8)
        self.context_ = build_reference(
            PointSet(X, membership),
            T=int(self.n_rays),
            B=float(self.sphere_coverage),
            mcs=int(self.min_cluster_size),
            eta_c=self.eta_c,
            eta_q=self.eta_q,
            seed=self.random_state,
            workers=_resolve_workers(self.n_jobs),
        )
        self.labels_ = self.context_.distilled.labels
        self.n_features_in_ = X.shape[1]
        return self

    def evaluate(self, Q, first_id=0) -> list:
        """Full :class:`QueryVerdict` for every row of ``Q``."""
        check_is_fitted(self, "context_")
        Q = check_array(Q, dtype=np.float64, input_name="Q")
        return evaluate_queries(
            Q,
            self.context_,
            T=int(self.n_rays),
            seed=self.random_state,
            workers=_resolve_workers(self.n_jobs),
            first_id=first_id,
        )

    def predict(self, Q, strategy=None):
        strategy = strategy or self.strategy
        if strategy not in ("conservative", "flexible", "closest"):
            raise ValueError(f"unknown strategy {strategy!r}")
        verdicts = self.evaluate(Q)
        if strategy == "closest":
            return np.array([v.closest_component for v in verdicts], dtype=np.int64)
        return np.array([getattr(v, strategy) for v in verdicts], dtype=np.int64)

    def transform(self, Q):
        return np.array([[v.closest_length] for v in self.evaluate(Q)])


__all__ = [
    "DelaunayComponentAnalysis",
    "QueryDelaunayComponentAnalysis",
    "OUTLIER",
    "UNASSIGNED",
    "default_workers",
]
