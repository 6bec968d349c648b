"""Monte Carlo approximation of the Delaunay graph by Voronoi ray casting.

Rays leave each vertex ``z`` in isotropic random directions ``u``. The ray
``z + t u`` crosses the bisector between ``z`` and ``z_j`` at

    t_j = |z_j - z|^2 / (2 <u, z_j - z>)        (only when <u, z_j - z> > 0)

and the smallest such ``t_j`` is where it leaves the Voronoi cell of ``z``.
That crossing point is equidistant from ``z`` and ``z_j`` and no closer to
any other point, so ``(z, z_j)`` is a Delaunay edge.

Internally the search maximises the ratio ``r_j = <u, z_j - z> / |z_j - z|^2``
(``t_j = 1 / (2 r_j)``). Because ``r_j <= 1 / |z_j - z|``, candidates are
visited nearest first and a ray stops as soon as no farther point can beat
its current best.
"""
from __future__ import annotations

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from .exceptions import InvalidCoverage, ParseError, TooFewPoints
from .pointset_io import PointSet

logger = logging.getLogger(__name__)

STREAM_VERTEX = 0
STREAM_QUERY = 1

TIE_RTOL = 1e-12
COVERAGE_TOL = 1e-12
MIN_DIRECTION_NORM = 1e-12

_RAY_CHUNK = 2048
_FIRST_BLOCK = 32
_MAX_BLOCK = 4096

DCAG_MAGIC = b"DCAG"
_DCAG_HEADER = struct.Struct("<4sIIIQ")
_DCAG_EDGE = np.dtype([("i", "<u4"), ("j", "<u4"), ("length", "<f8"), ("beta_ij", "<f8"), ("beta_ji", "<f8")])


@dataclass(frozen=True)
class RayHit:
    source: int
    target: int
    t: float
    witness: np.ndarray


@dataclass(frozen=True)
class ApproxDelaunayGraph:
    """Edges discovered by ray casting, with per-direction hit counts.

    ``edges`` holds ``(i, j)`` pairs with ``i < j`` in lexicographic order.
    ``hits[k, 0]`` counts rays from ``edges[k, 0]`` that left its cell through
    the face shared with ``edges[k, 1]``; ``hits[k, 1]`` is the reverse count.
    """

    n_vertices: int
    dim: int
    rays_per_vertex: int
    edges: np.ndarray
    lengths: np.ndarray
    hits: np.ndarray
    unbounded_hits: np.ndarray
    witnesses: Optional[list] = field(default=None, repr=False, compare=False)
    witness_violations: int = 0

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def beta(self) -> np.ndarray:
        """Directional solid-angle estimates, shape ``(n_edges, 2)``."""
        return self.hits / self.rays_per_vertex

    @property
    def unbounded_fraction(self) -> np.ndarray:
        return self.unbounded_hits / self.rays_per_vertex

    def outgoing_hits(self) -> np.ndarray:
        """Per-vertex total of rays that crossed some retained bisector."""
        out = np.zeros(self.n_vertices, dtype=np.int64)
        np.add.at(out, self.edges[:, 0], self.hits[:, 0])
        np.add.at(out, self.edges[:, 1], self.hits[:, 1])
        return out

    def edge_set(self) -> set:
        return {(int(i), int(j)) for i, j in self.edges}

    def select_edges(self, mask) -> "ApproxDelaunayGraph":
        mask = np.asarray(mask, dtype=bool)
        return ApproxDelaunayGraph(
            n_vertices=self.n_vertices,
            dim=self.dim,
            rays_per_vertex=self.rays_per_vertex,
            edges=self.edges[mask],
            lengths=self.lengths[mask],
            hits=self.hits[mask],
            unbounded_hits=self.unbounded_hits,
            witness_violations=self.witness_violations,
        )


def ray_generator(seed: int, stream: int, index: int) -> np.random.Generator:
    """Philox stream keyed by ``(seed, stream, index)``; independent of scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), stream, int(index)])))


def sample_directions(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    u = rng.standard_normal((n, dim))
    norms = np.linalg.norm(u, axis=1)
    bad = norms < MIN_DIRECTION_NORM
    while bad.any():
        u[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms[bad] = np.linalg.norm(u[bad], axis=1)
        bad = norms < MIN_DIRECTION_NORM
    return u / norms[:, None]


def cast_ray(source: int, direction, points) -> Optional[RayHit]:
    """Follow one ray from ``points[source]`` to the boundary of its Voronoi cell.

    Returns None when the ray never crosses a bisector (unbounded cell).
    """
    pts = points.points if isinstance(points, PointSet) else np.asarray(points, dtype=np.float64)
    u = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise ValueError("direction must have unit norm")
    z = pts[source]
    offsets = pts - z
    den = offsets @ u
    cand = np.flatnonzero(den > 0)
    if cand.size == 0:
        return None
    t = np.einsum("ij,ij->i", offsets[cand], offsets[cand]) / (2.0 * den[cand])
    t_min = t.min()
    target = int(cand[t <= t_min * (1 + TIE_RTOL)].min())
    return RayHit(int(source), target, float(t_min), z + t_min * u)


class _Candidates:
    """Candidate points around one origin, handed out nearest first in growing blocks.

    Blocks are carved off lazily with ``argpartition``, so the usual case of
    every ray stopping at a nearby bisector never sorts the far points.
    """

    def __init__(self, origin, points, ids):
        offsets = points - origin
        sq = np.einsum("ij,ij->i", offsets, offsets)
        keep = np.flatnonzero(sq > 0)
        self.offsets = offsets[keep]
        self.sq = sq[keep]
        self.ids = ids[keep]
        self.rows = keep
        self.blocks = []
        self._rest = np.arange(len(keep))
        self._size = _FIRST_BLOCK

    def __len__(self) -> int:
        return len(self.ids)

    def block(self, k):
        """``(ids, scaled offsets, bound)`` of block ``k`` or None past the end.

        ``bound`` is the distance of the nearest point in later blocks (inf
        when none remain); no later point has a ratio above ``1 / bound``.
        """
        while len(self.blocks) <= k and len(self._rest):
            rest, size = self._rest, self._size
            if len(rest) > size:
                part = np.argpartition(self.sq[rest], size - 1)
                take, self._rest = rest[part[:size]], rest[part[size:]]
                bound = float(np.sqrt(self.sq[self._rest].min()))
            else:
                take, self._rest, bound = rest, rest[:0], np.inf
            # id order inside a block makes argmax pick the smallest id on ties
            take = take[np.argsort(self.ids[take], kind="stable")]
            scaled = self.offsets[take] / self.sq[take][:, None]
            self.blocks.append((self.ids[take], scaled, bound))
            self._size = min(2 * size, _MAX_BLOCK)
        return self.blocks[k] if k < len(self.blocks) else None

    def within(self, radius: float) -> np.ndarray:
        """Rows (into the original ``points``) of candidates no farther than ``radius``."""
        return self.rows[self.sq <= radius * radius]


def _nearest_bisectors(cands: _Candidates, directions: np.ndarray):
    """Vectorised ray cast. Returns ``(target ids or -1, best ratio)`` per ray."""
    n_rays = len(directions)
    best = np.zeros(n_rays)
    target = np.full(n_rays, -1, dtype=np.int64)
    active = np.arange(n_rays)
    k = 0
    while active.size:
        blk = cands.block(k)
        if blk is None:
            break
        blk_ids, scaled, bound = blk
        k += 1
        r = directions[active] @ scaled.T
        rows = np.arange(len(active))
        rmax = r[rows, r.argmax(axis=1)]
        near = r >= (rmax * (1 - TIE_RTOL))[:, None]
        cand_id = blk_ids[near.argmax(axis=1)]
        cur = best[active]
        cur_t = target[active]
        pos = rmax > 0
        better = pos & (rmax > cur * (1 + TIE_RTOL))
        tied = pos & ~better & (cur > 0) & (rmax >= cur * (1 - TIE_RTOL)) & (cand_id < cur_t)
        upd = better | tied
        best[active[upd]] = np.maximum(rmax[upd], cur[upd])
        target[active[upd]] = cand_id[upd]
        if bound == np.inf:
            break
        # every later candidate has ratio <= 1 / bound
        done = best[active] * bound > 1 + 4 * TIE_RTOL
        active = active[~done]
    return target, best


def _witness_ok(points, sq_norms, origins, targets, witnesses, screen=None):
    """Equidistance and global-minimality check for a batch of witnesses.

    ``screen`` optionally restricts the minimality check to a subset of rows
    of ``points`` known to contain every point that could be closer.
    """
    tau = 1e-9 * (1 + np.linalg.norm(witnesses, axis=1))
    d_src = np.linalg.norm(witnesses - origins, axis=1)
    d_tgt = np.linalg.norm(witnesses - points[targets], axis=1)
    ok = np.abs(d_src - d_tgt) <= tau
    if screen is None:
        screen = np.arange(len(points))
    pool = points[screen]
    # Gram-matrix distances screen for close calls; those are recomputed directly.
    xsq = np.einsum("ij,ij->i", witnesses, witnesses)
    approx = xsq[:, None] - 2.0 * witnesses @ pool.T + sq_norms[screen][None, :]
    slack = 1e-6 * (1 + xsq[:, None] + sq_norms[screen][None, :])
    rows, cols = np.nonzero(approx < (d_src + tau)[:, None] ** 2 + slack)
    direct = np.linalg.norm(witnesses[rows] - pool[cols], axis=1)
    bad = direct < d_src[rows] - tau[rows]
    ok[np.unique(rows[bad])] = False
    return ok


def cast_ray_stream(origin, points, ids, T: int, rng: np.random.Generator):
    """Cast ``T`` rays from ``origin`` against ``points`` (whose ids are ``ids``).

    Directions are drawn from ``rng`` in fixed-size chunks, so the first
    ``T1`` rays of a ``T2 > T1`` budget are the same rays. Returns the
    directions, the hit id per ray (-1 when the ray escapes) and the ray
    parameter ``t`` (inf when it escapes).
    """
    return _cast_stream(_Candidates(origin, points, ids), origin, T, rng)


def _cast_stream(cands, origin, T, rng):
    dim = len(origin)
    dirs = np.empty((T, dim))
    target = np.empty(T, dtype=np.int64)
    ratio = np.empty(T)
    for start in range(0, T, _RAY_CHUNK):
        stop = min(T, start + _RAY_CHUNK)
        dirs[start:stop] = sample_directions(rng, stop - start, dim)
        target[start:stop], ratio[start:stop] = _nearest_bisectors(cands, dirs[start:stop])
    with np.errstate(divide="ignore"):
        t = np.where(target >= 0, 1.0 / (2.0 * ratio), np.inf)
    return dirs, target, t


def _cast_vertex(pts, sq_norms, i, T, seed, check_witnesses, keep_witnesses):
    cands = _Candidates(pts[i], pts, np.arange(len(pts)))
    dirs, target, t_all = _cast_stream(cands, pts[i], T, ray_generator(seed, STREAM_VERTEX, i))
    hit = target >= 0
    uniq, first, counts = np.unique(target[hit], return_index=True, return_counts=True)
    unbounded = int(T - hit.sum())
    violations = 0
    hits = []
    if check_witnesses or keep_witnesses:
        ray_idx = np.flatnonzero(hit)[first]
        t = t_all[ray_idx]
        x = pts[i] + t[:, None] * dirs[ray_idx]
        if check_witnesses:
            # a point closer to a witness than z_i lies within 2t of z_i
            t_max = float(t_all[hit].max()) if hit.any() else 0.0
            screen = cands.within(2.0 * t_max * (1 + 1e-6) + 1e-6 * (1 + np.linalg.norm(pts[i]) + 2.0 * t_max))
            ok = _witness_ok(pts, sq_norms, pts[i][None, :], uniq, x, screen)
            for k in np.flatnonzero(~ok):
                # fall back to any other ray that found the same neighbour
                alt = np.flatnonzero(target == uniq[k])[1:]
                t_o = t_all[alt]
                x_o = pts[i] + t_o[:, None] * dirs[alt]
                ok_o = _witness_ok(pts, sq_norms, pts[i][None, :], np.full(len(alt), uniq[k]), x_o, screen)
                if ok_o.any():
                    j = int(np.argmax(ok_o))
                    t[k], x[k] = t_o[j], x_o[j]
                else:
                    violations += 1
                    logger.warning("no valid witness for edge %d -> %d", i, uniq[k])
        if keep_witnesses:
            hits = [RayHit(i, int(j), float(tt), xx) for j, tt, xx in zip(uniq, t, x)]
    return uniq, counts, unbounded, violations, hits


def build_graph(
    points,
    T: int = 10_000,
    seed: int = 0,
    workers: int = 1,
    check_witnesses: bool = True,
    keep_witnesses: bool = False,
) -> ApproxDelaunayGraph:
    """Approximate the Delaunay graph of ``points`` with ``T`` rays per vertex.

    Each vertex draws its rays from its own Philox stream, so the result does
    not depend on ``workers``. With ``keep_witnesses`` the first crossing
    found for every directed neighbour pair is returned in ``witnesses``.
    """
    pts = points.points if isinstance(points, PointSet) else np.asarray(points, dtype=np.float64)
    n, dim = pts.shape
    if n < 2:
        raise TooFewPoints(f"need at least 2 points, got {n}")
    if T < 1:
        raise ValueError("T must be at least 1")
    sq_norms = np.einsum("ij,ij->i", pts, pts)

    def work(i):
        return _cast_vertex(pts, sq_norms, i, T, seed, check_witnesses, keep_witnesses)

    if workers > 1:
        with threadpool_limits(limits=1), ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, range(n)))
    else:
        results = [work(i) for i in range(n)]

    src = np.concatenate([np.full(len(r[0]), i, dtype=np.int64) for i, r in enumerate(results)])
    dst = np.concatenate([r[0] for r in results]).astype(np.int64)
    cnt = np.concatenate([r[1] for r in results]).astype(np.int64)
    unbounded = np.array([r[2] for r in results], dtype=np.int64)
    violations = sum(r[3] for r in results)
    witnesses = [h for r in results for h in r[4]] if keep_witnesses else None

    lo, hi = np.minimum(src, dst), np.maximum(src, dst)
    keys, inverse = np.unique(lo * n + hi, return_inverse=True)
    edges = np.stack([keys // n, keys % n], axis=1)
    hits = np.zeros((len(keys), 2), dtype=np.int64)
    np.add.at(hits, (inverse, (src != lo).astype(np.int64)), cnt)
    lengths = np.linalg.norm(pts[edges[:, 0]] - pts[edges[:, 1]], axis=1)
    if violations:
        logger.warning("%d edge(s) without a verified witness", violations)
    return ApproxDelaunayGraph(
        n_vertices=n,
        dim=dim,
        rays_per_vertex=int(T),
        edges=edges,
        lengths=lengths,
        hits=hits,
        unbounded_hits=unbounded,
        witnesses=witnesses,
        witness_violations=violations,
    )


def filter_by_sphere_coverage(g: ApproxDelaunayGraph, B: float) -> ApproxDelaunayGraph:
    """Drop each vertex's longest edges beyond a cumulative solid angle ``B``.

    Per vertex, incident edges are walked shortest first and kept up to and
    including the first one whose cumulative hit fraction strictly exceeds
    ``min(B, total - 1e-12)``, where ``total`` is the vertex's own covered
    fraction. A vertex covering less than ``B`` thus keeps every edge that
    its own rays found. An edge survives when either endpoint keeps it.
    """
    if not 0.0 <= B < 1.0:
        raise InvalidCoverage(f"sphere coverage must lie in [0, 1), got {B}")
    m = g.n_edges
    if m == 0:
        return g
    T = g.rays_per_vertex
    vertex = np.concatenate([g.edges[:, 0], g.edges[:, 1]])
    other = np.concatenate([g.edges[:, 1], g.edges[:, 0]])
    hits = np.concatenate([g.hits[:, 0], g.hits[:, 1]])
    length = np.concatenate([g.lengths, g.lengths])
    edge_idx = np.concatenate([np.arange(m), np.arange(m)])

    order = np.lexsort((other, length, vertex))
    vertex, hits, edge_idx = vertex[order], hits[order], edge_idx[order]
    cum = np.cumsum(hits)
    group_start = np.flatnonzero(np.r_[True, vertex[1:] != vertex[:-1]])
    group_id = np.repeat(np.arange(len(group_start)), np.diff(np.r_[group_start, len(vertex)]))
    offset = np.r_[0, cum][group_start][group_id]
    cum_before = cum - hits - offset
    total = g.outgoing_hits()[vertex]

    kept = cum_before / T <= np.minimum(B, total / T - COVERAGE_TOL)
    survive = np.zeros(m, dtype=bool)
    survive[edge_idx[kept]] = True
    return g.select_edges(survive)


def save_graph(g: ApproxDelaunayGraph, path) -> None:
    rec = np.empty(g.n_edges, dtype=_DCAG_EDGE)
    rec["i"], rec["j"] = g.edges[:, 0], g.edges[:, 1]
    rec["length"] = g.lengths
    beta = g.beta
    rec["beta_ij"], rec["beta_ji"] = beta[:, 0], beta[:, 1]
    with open(path, "wb") as fh:
        fh.write(_DCAG_HEADER.pack(DCAG_MAGIC, g.n_vertices, g.dim, g.rays_per_vertex, g.n_edges))
        fh.write(rec.tobytes())
        fh.write(np.asarray(g.unbounded_fraction, dtype="<f8").tobytes())


def load_graph(path) -> ApproxDelaunayGraph:
    data = Path(path).read_bytes()
    if len(data) < _DCAG_HEADER.size:
        raise ParseError(f"{path}: truncated DCAG header")
    magic, n, dim, T, m = _DCAG_HEADER.unpack_from(data)
    if magic != DCAG_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    expected = _DCAG_HEADER.size + m * _DCAG_EDGE.itemsize + 8 * n
    if len(data) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, found {len(data)}")
    rec = np.frombuffer(data, dtype=_DCAG_EDGE, count=m, offset=_DCAG_HEADER.size)
    unb = np.frombuffer(data, dtype="<f8", count=n, offset=_DCAG_HEADER.size + m * _DCAG_EDGE.itemsize)
    edges = np.stack([rec["i"], rec["j"]], axis=1).astype(np.int64)
    hits = np.rint(np.stack([rec["beta_ij"], rec["beta_ji"]], axis=1) * T).astype(np.int64)
    return ApproxDelaunayGraph(
        n_vertices=int(n),
        dim=int(dim),
        rays_per_vertex=int(T),
        edges=edges.reshape(-1, 2),
        lengths=rec["length"].astype(np.float64),
        hits=hits.reshape(-1, 2),
        unbounded_hits=np.rint(unb * T).astype(np.int64),
    )
