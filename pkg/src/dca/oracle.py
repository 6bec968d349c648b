"""Independent reference computations used to check the main pipeline.

Nothing here shares code with the ray caster, the distiller or the scorer:
exact 2D Delaunay triangulation (Bowyer-Watson with exact predicates),
exact 2D solid angles of Voronoi facets, brute-force spanning forests and
score recomputation by direct counting, and a synthetic cluster generator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .exceptions import DegenerateInput
from .pointset_io import EVAL, REF, PointSet
from .scores import GlobalScores

_FILTER = 1e-10


def _orient(a, b, c) -> int:
    det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    perm = abs((b[0] - a[0]) * (c[1] - a[1])) + abs((b[1] - a[1]) * (c[0] - a[0]))
    if abs(det) > _FILTER * perm:
        return 1 if det > 0 else -1
    A, B, C = [(Fraction(p[0]), Fraction(p[1])) for p in (a, b, c)]
    det = (B[0] - A[0]) * (C[1] - A[1]) - (B[1] - A[1]) * (C[0] - A[0])
    return (det > 0) - (det < 0)


def _incircle(a, b, c, d) -> int:
    """Positive when ``d`` is strictly inside the circle through ccw ``a, b, c``."""

    def det3(pa, pb, pc, pd):
        adx, ady = pa[0] - pd[0], pa[1] - pd[1]
        bdx, bdy = pb[0] - pd[0], pb[1] - pd[1]
        cdx, cdy = pc[0] - pd[0], pc[1] - pd[1]
        alift, blift, clift = adx * adx + ady * ady, bdx * bdx + bdy * bdy, cdx * cdx + cdy * cdy
        det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) + clift * (adx * bdy - bdx * ady)
        perm = (
            alift * (abs(bdx * cdy) + abs(cdx * bdy))
            + blift * (abs(cdx * ady) + abs(adx * cdy))
            + clift * (abs(adx * bdy) + abs(bdx * ady))
        )
        return det, perm

    det, perm = det3(a, b, c, d)
    if abs(det) > _FILTER * perm:
        return 1 if det > 0 else -1
    exact = [(Fraction(p[0]), Fraction(p[1])) for p in (a, b, c, d)]
    det, _ = det3(*exact)
    return (det > 0) - (det < 0)


def exact_delaunay_triangles_2d(points) -> list:
    """Counter-clockwise Delaunay triangles ``(i, j, k)`` of a 2D point set.

    Raises :class:`DegenerateInput` when four input points are found to be
    exactly cocircular, or when the input has fewer than 3 points or is
    entirely collinear.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("exact_delaunay_2d needs 2D points")
    n = len(pts)
    if n < 3:
        raise DegenerateInput("need at least 3 points")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    centre = (lo + hi) / 2
    span = max(float((hi - lo).max()), 1.0) * 1e7
    coords = [tuple(p) for p in pts.tolist()]
    coords += [
        (centre[0] - 2 * span, centre[1] - span),
        (centre[0] + 2 * span, centre[1] - span),
        (centre[0], centre[1] + 2 * span),
    ]
    triangles = {(n, n + 1, n + 2)}
    for p in range(n):
        bad = []
        for tri in triangles:
            s = _incircle(coords[tri[0]], coords[tri[1]], coords[tri[2]], coords[p])
            if s > 0:
                bad.append(tri)
            elif s == 0 and max(tri) < n:
                raise DegenerateInput(f"points {tri} and {p} are cocircular")
        directed = set()
        for a, b, c in bad:
            directed.update(((a, b), (b, c), (c, a)))
        boundary = [(u, v) for u, v in directed if (v, u) not in directed]
        triangles.difference_update(bad)
        for u, v in boundary:
            triangles.add((u, v, p))
    real = [t for t in triangles if max(t) < n]
    if not real:
        raise DegenerateInput("all points are collinear")
    return sorted(real)


def exact_delaunay_2d(points) -> set:
    """Edge set ``{(i, j), i < j}`` of the exact 2D Delaunay triangulation."""
    edges = set()
    for a, b, c in exact_delaunay_triangles_2d(points):
        for u, v in ((a, b), (b, c), (c, a)):
            edges.add((min(u, v), max(u, v)))
    return edges


def _circumcentre(a, b, c) -> np.ndarray:
    d = 2 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
    sa, sb, sc = a @ a, b @ b, c @ c
    ux = (sa * (b[1] - c[1]) + sb * (c[1] - a[1]) + sc * (a[1] - b[1])) / d
    uy = (sa * (c[0] - b[0]) + sb * (a[0] - c[0]) + sc * (b[0] - a[0])) / d
    return np.array([ux, uy])


def _angle(u, v) -> float:
    return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), u[0] * v[0] + u[1] * v[1])


def exact_solid_angles_2d(points) -> dict:
    """Fraction of directions at ``i`` that leave ``Cell(i)`` through the facet shared with ``j``.

    Keys are directed pairs ``(i, j)``. The facet between two Delaunay
    neighbours joins the circumcentres of their (one or two) shared triangles;
    a hull edge's facet is a ray to infinity along the outward normal.
    """
    pts = np.asarray(points, dtype=np.float64)
    owners = {}
    for tri in exact_delaunay_triangles_2d(pts):
        cc = _circumcentre(*pts[list(tri)])
        a, b, c = tri
        for u, v, w in ((a, b, c), (b, c, a), (c, a, b)):
            owners.setdefault((min(u, v), max(u, v)), []).append((cc, w))
    out = {}
    for (i, j), sides in owners.items():
        for s, o in ((i, j), (j, i)):
            z = pts[s]
            if len(sides) == 2:
                ang = _angle(sides[0][0] - z, sides[1][0] - z)
            else:
                cc, w = sides[0]
                edge = pts[o] - z
                normal = np.array([-edge[1], edge[0]])
                if normal @ (pts[w] - z) > 0:
                    normal = -normal
                ang = _angle(cc - z, normal)
            out[(s, o)] = ang / (2 * math.pi)
    return out


def brute_force_msf_weight(n_vertices: int, edges, lengths) -> float:
    """Total weight of a minimum spanning forest, by relabelling (no union-find)."""
    comp = list(range(n_vertices))
    total = 0.0
    for k in sorted(range(len(lengths)), key=lambda k: lengths[k]):
        i, j = int(edges[k][0]), int(edges[k][1])
        ci, cj = comp[i], comp[j]
        if ci != cj:
            total += float(lengths[k])
            comp = [ci if c == cj else c for c in comp]
    return total


def brute_force_component_scores(dg, membership) -> list:
    """``(n_R, n_E, e_RR, e_EE, e_RE, c, q)`` per component, as exact fractions."""
    membership = [int(m) for m in membership]
    labels = [int(x) for x in dg.labels]
    n_comp = max(labels, default=-1) + 1
    rows = []
    for k in range(n_comp):
        n_R = sum(1 for v, lab in enumerate(labels) if lab == k and membership[v] == REF)
        n_E = sum(1 for v, lab in enumerate(labels) if lab == k and membership[v] == EVAL)
        e_RR = e_EE = e_RE = 0
        for i, j in dg.graph.edges.tolist():
            if labels[i] != k or labels[j] != k:
                continue
            kinds = {membership[i], membership[j]}
            if kinds == {REF}:
                e_RR += 1
            elif kinds == {EVAL}:
                e_EE += 1
            else:
                e_RE += 1
        n = n_R + n_E
        c = 1 - Fraction(abs(n_R - n_E), n) if n else Fraction(0)
        e = e_RR + e_EE + e_RE
        q = 1 - Fraction(e_RR + e_EE, e) if e else Fraction(0)
        rows.append((n_R, n_E, e_RR, e_EE, e_RE, c, q))
    return rows


def brute_force_scores(dg, membership, eta_c: float = 0.0, eta_q: float = 0.0) -> GlobalScores:
    rows = brute_force_component_scores(dg, membership)
    membership = [int(m) for m in membership]
    total_R = membership.count(REF)
    total_E = membership.count(EVAL)
    fundamental = [r for r in rows if r[5] > eta_c and r[6] > eta_q]
    n_R = sum(r[0] for r in rows)
    n_E = sum(r[1] for r in rows)
    homo = sum(r[2] + r[3] for r in rows)
    edges = sum(r[2] + r[3] + r[4] for r in rows)
    n = len(membership)
    return GlobalScores(
        network_consistency=float(1 - Fraction(abs(n_R - n_E), n_R + n_E)) if n_R + n_E else 0.0,
        network_quality=float(1 - Fraction(homo, edges)) if edges else 0.0,
        precision=float(Fraction(sum(r[1] for r in fundamental), total_E)) if total_E else 0.0,
        recall=float(Fraction(sum(r[0] for r in fundamental), total_R)) if total_R else 0.0,
        num_components=len(rows),
        num_fundamental=len(fundamental),
        largest_component_relative_size=float(Fraction(max((r[0] + r[1] for r in rows), default=0), n)) if n else 0.0,
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Isotropic Gaussian clusters with well-separated centres.

    ``center_separation`` is the minimum distance between centres in units of
    ``cluster_std``. ``thinning`` maps a cluster index to the fraction of its
    REF points to discard. ``ref_clusters`` / ``eval_clusters`` restrict which
    clusters contribute to each set (all of them by default).
    """

    n_clusters: int = 7
    points_per_cluster: int = 500
    dim: int = 8
    cluster_std: float = 1.0
    center_separation: float = 20.0
    seed: int = 0
    thinning: dict = field(default_factory=dict)
    ref_clusters: Optional[tuple] = None
    eval_clusters: Optional[tuple] = None

    def __post_init__(self):
        if self.center_separation <= 0:
            raise ValueError("center_separation must be positive")
        for k, p in self.thinning.items():
            if not 0.0 <= p < 1.0:
                raise ValueError(f"thinning fraction for cluster {k} must lie in [0, 1)")


@dataclass(frozen=True)
class SyntheticData:
    ref: PointSet
    eval: PointSet
    ref_labels: np.ndarray
    eval_labels: np.ndarray
    centers: np.ndarray


def kept_after_thinning(n: int, p: float) -> int:
    return max(1, math.ceil(n * (1 - p) - 1e-9))


def _place_centers(rng, k, dim, min_dist):
    side = min_dist * max(2.0, k ** (1.0 / dim)) * 1.5
    while True:
        centers = []
        for _ in range(10_000):
            cand = rng.uniform(0, side, size=dim)
            if all(np.linalg.norm(cand - c) >= min_dist for c in centers):
                centers.append(cand)
                if len(centers) == k:
                    return np.array(centers)
        side *= 1.25


def generate(spec: SyntheticSpec) -> SyntheticData:
    """Draw REF and EVAL sets from the same clusters with independent streams."""
    center_ss, ref_ss, eval_ss = np.random.SeedSequence(spec.seed).spawn(3)
    centers = _place_centers(
        np.random.default_rng(center_ss), spec.n_clusters, spec.dim, spec.center_separation * spec.cluster_std
    )
    all_clusters = tuple(range(spec.n_clusters))

    def draw(ss, clusters, thin):
        rng = np.random.default_rng(ss)
        blocks, labels = [], []
        for k in all_clusters:
            pts = centers[k] + spec.cluster_std * rng.standard_normal((spec.points_per_cluster, spec.dim))
            if k not in clusters:
                continue
            if thin and k in spec.thinning:
                pts = pts[: kept_after_thinning(len(pts), spec.thinning[k])]
            blocks.append(pts)
            labels.append(np.full(len(pts), k))
        if not blocks:
            return np.empty((0, spec.dim)), np.empty(0, dtype=np.int64)
        return np.vstack(blocks), np.concatenate(labels)

    r_pts, r_lab = draw(ref_ss, spec.ref_clusters or all_clusters, True)
    e_pts, e_lab = draw(eval_ss, spec.eval_clusters or all_clusters, False)
    return SyntheticData(
        ref=PointSet(r_pts, np.full(len(r_pts), REF, dtype=np.uint8)),
        eval=PointSet(e_pts, np.full(len(e_pts), EVAL, dtype=np.uint8)),
        ref_labels=r_lab,
        eval_labels=e_lab,
        centers=centers,
    )
