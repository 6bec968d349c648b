import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import graph_from_edges
from dca.delaunay import (
    build_graph,
    cast_ray,
    cast_ray_stream,
    filter_by_sphere_coverage,
    load_graph,
    ray_generator,
    sample_directions,
    save_graph,
)
from dca.exceptions import InvalidCoverage, TooFewPoints
from dca.oracle import exact_delaunay_2d
from dca.pointset_io import PointSet


# -- cast_ray -----------------------------------------------------------------

def test_cast_ray_midpoint():
    hit = cast_ray(0, [1.0, 0.0], [[0, 0], [2, 0]])
    assert hit.target == 1 and hit.t == 1.0
    assert np.allclose(hit.witness, [1, 0])


def test_cast_ray_orthogonal_escapes():
    assert cast_ray(0, [0.0, 1.0], [[0, 0], [2, 0]]) is None


def test_cast_ray_nearest_bisector_wins():
    hit = cast_ray(0, [1.0, 0.0], [[0, 0], [2, 0], [6, 0]])
    assert hit.target == 1 and hit.t == 1.0


def test_cast_ray_tie_goes_to_smaller_id():
    # (2,0) and (0,2) have bisectors meeting the diagonal ray at the same point
    u = np.array([1.0, 1.0]) / np.sqrt(2)
    hit = cast_ray(0, u, [[0, 0], [0, 2], [2, 0]])
    assert hit.target == 1


def test_cast_ray_skips_duplicates():
    hit = cast_ray(0, [1.0, 0.0], [[0, 0], [0, 0], [4, 0]])
    assert hit.target == 2 and hit.t == 2.0


@pytest.mark.parametrize("dim", [2, 3, 7, 16])
def test_vectorised_stream_matches_single_rays(dim):
    rng = np.random.default_rng(dim)
    pts = rng.normal(size=(300, dim))
    pts[7] = pts[0]
    ids = np.arange(1, 300)
    dirs, target, t = cast_ray_stream(pts[0], pts[1:], ids, 400, ray_generator(3, 0, 0))
    for u, got, tt in zip(dirs, target, t):
        hit = cast_ray(0, u, pts)
        if hit is None:
            assert got == -1 and np.isinf(tt)
        else:
            assert got == hit.target
            assert tt == pytest.approx(hit.t, rel=1e-12)


def test_directions_are_unit_and_reproducible():
    a = sample_directions(ray_generator(5, 0, 9), 1000, 6)
    b = sample_directions(ray_generator(5, 0, 9), 1000, 6)
    assert np.array_equal(a, b)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)
    c = sample_directions(ray_generator(5, 0, 10), 1000, 6)
    assert not np.array_equal(a, c)


# -- build_graph ----------------------------------------------------------------

@pytest.mark.parametrize("dim", [1, 2, 5, 20])
def test_two_points_single_edge_half_coverage(dim):
    pts = np.zeros((2, dim))
    pts[1, 0] = 1.0
    g = build_graph(pts, T=20_000, seed=1)
    assert g.n_edges == 1 and g.edges.tolist() == [[0, 1]]
    assert np.all(np.abs(g.beta - 0.5) < 0.02)
    assert g.lengths[0] == 1.0


def test_unit_square_jittered():
    pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    pts += np.random.default_rng(0).uniform(-1e-6, 1e-6, pts.shape)
    exact = exact_delaunay_2d(pts)
    sides = {(0, 1), (1, 2), (2, 3), (0, 3)}
    assert sides < exact and len(exact) == 5
    g = build_graph(pts, T=100_000, seed=0)
    assert sides <= g.edge_set() <= exact
    diag = [k for k, e in enumerate(g.edges.tolist()) if tuple(e) not in sides]
    assert all(g.beta[k].max() < 1e-3 for k in diag)


@pytest.mark.parametrize("seed", range(3))
def test_edges_subset_of_exact_delaunay(seed):
    pts = np.random.default_rng(seed).uniform(size=(50, 2))
    g = build_graph(pts, T=10_000, seed=seed)
    assert g.edge_set() <= exact_delaunay_2d(pts)


def test_count_conservation_and_basic_invariants():
    pts = np.random.default_rng(4).normal(size=(80, 4))
    g = build_graph(pts, T=777, seed=2)
    assert np.array_equal(g.outgoing_hits() + g.unbounded_hits, np.full(80, 777))
    assert np.all(g.edges[:, 0] < g.edges[:, 1]) and g.edges.max() < 80
    assert np.all(g.lengths > 0)
    assert np.all((g.beta >= 0) & (g.beta <= 1))
    assert g.witness_violations == 0


def test_duplicates_never_form_edges():
    pts = np.random.default_rng(5).normal(size=(30, 3))
    pts = np.vstack([pts, pts[:5]])
    g = build_graph(pts, T=2000, seed=0)
    assert np.all(g.lengths > 0)
    dup_pairs = {(k, 30 + k) for k in range(5)}
    assert not dup_pairs & g.edge_set()


def test_nested_budgets_give_nested_edges():
    pts = np.random.default_rng(6).normal(size=(60, 5))
    small, large = build_graph(pts, T=300, seed=3), build_graph(pts, T=5000, seed=3)
    assert small.edge_set() <= large.edge_set()


def test_worker_count_does_not_change_result():
    pts = np.random.default_rng(7).normal(size=(60, 3))
    a = build_graph(pts, T=500, seed=9, workers=1)
    b = build_graph(pts, T=500, seed=9, workers=3)
    assert np.array_equal(a.edges, b.edges) and np.array_equal(a.hits, b.hits)
    assert np.array_equal(a.unbounded_hits, b.unbounded_hits)


def test_seed_changes_rays():
    pts = np.random.default_rng(8).normal(size=(40, 3))
    a = build_graph(pts, T=200, seed=1)
    b = build_graph(pts, T=200, seed=2)
    assert not np.array_equal(a.hits, b.hits) or not np.array_equal(a.edges, b.edges)


def test_witnesses_are_equidistant_and_minimal():
    pts = np.random.default_rng(10).normal(size=(100, 6))
    g = build_graph(pts, T=500, seed=0, keep_witnesses=True)
    directed = {(int(i), int(j)) for (i, j), h in zip(g.edges, g.hits) if h[0]} | {
        (int(j), int(i)) for (i, j), h in zip(g.edges, g.hits) if h[1]
    }
    assert {(h.source, h.target) for h in g.witnesses} == directed
    for h in g.witnesses:
        d = np.linalg.norm(pts - h.witness, axis=1)
        tau = 1e-9 * (1 + np.linalg.norm(h.witness))
        assert abs(d[h.source] - d[h.target]) <= tau
        assert d.min() >= d[h.source] - tau


def test_too_few_points():
    with pytest.raises(TooFewPoints):
        build_graph(np.zeros((1, 2)))


def test_accepts_pointset():
    ps = PointSet(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    assert build_graph(ps, T=100).n_edges == 3


# -- filter_by_sphere_coverage --------------------------------------------------

def _star(hits_back):
    # vertex 0 with neighbours 1, 2, 3 at lengths 1, 2, 5 and beta 0.5, 0.3, 0.1
    return graph_from_edges(
        4,
        [(0, 1), (0, 2), (0, 3)],
        lengths=[1.0, 2.0, 5.0],
        hits=[[5, 0], [3, 0], [1, hits_back]],
        T=10,
    )


def test_filter_cumulative_walk():
    out = filter_by_sphere_coverage(_star(0), 0.7)
    assert out.edge_set() == {(0, 1), (0, 2)}


def test_filter_union_rule_keeps_edge_wanted_by_other_end():
    out = filter_by_sphere_coverage(_star(10), 0.7)
    assert out.edge_set() == {(0, 1), (0, 2), (0, 3)}


def test_filter_exact_boundary_keeps_next_edge():
    g = graph_from_edges(4, [(0, 1), (0, 2), (0, 3)], lengths=[1, 2, 3], hits=[[5, 0], [2, 0], [1, 0]], T=10)
    # cumulative 0.5, 0.7, 0.8: 0.7 does not strictly exceed B = 0.7
    assert filter_by_sphere_coverage(g, 0.7).n_edges == 3


def test_filter_low_coverage_vertex_keeps_its_edges():
    g = graph_from_edges(3, [(0, 1), (0, 2)], lengths=[1, 2], hits=[[2, 0], [2, 0]], T=10)
    assert filter_by_sphere_coverage(g, 0.5).n_edges == 2


@pytest.mark.parametrize("B", [-0.1, 1.0, 1.2])
def test_filter_rejects_bad_coverage(B):
    with pytest.raises(InvalidCoverage):
        filter_by_sphere_coverage(_star(0), B)


def test_filter_monotone_in_B():
    pts = np.random.default_rng(11).normal(size=(150, 4))
    g = build_graph(pts, T=1000, seed=0)
    counts = [filter_by_sphere_coverage(g, B).n_edges for B in (0.1, 0.3, 0.5, 0.7, 0.9, 0.99)]
    assert counts == sorted(counts) and counts[-1] <= g.n_edges
    kept = filter_by_sphere_coverage(g, 0.3).edge_set()
    assert kept <= filter_by_sphere_coverage(g, 0.6).edge_set()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.999))
def test_filter_output_is_subset_with_unchanged_annotations(seed, B):
    pts = np.random.default_rng(seed).normal(size=(25, 3))
    g = build_graph(pts, T=64, seed=seed)
    out = filter_by_sphere_coverage(g, B)
    idx = {e: k for k, e in enumerate(map(tuple, g.edges.tolist()))}
    for k, e in enumerate(map(tuple, out.edges.tolist())):
        assert np.array_equal(out.hits[k], g.hits[idx[e]])
        assert out.lengths[k] == g.lengths[idx[e]]


# -- persistence ----------------------------------------------------------------

def test_dcag_round_trip(tmp_path):
    pts = np.random.default_rng(12).normal(size=(40, 3))
    g = build_graph(pts, T=333, seed=0)
    save_graph(g, tmp_path / "g.dcag")
    back = load_graph(tmp_path / "g.dcag")
    assert back.rays_per_vertex == 333 and back.dim == 3
    assert np.array_equal(back.edges, g.edges)
    assert np.array_equal(back.hits, g.hits)
    assert np.array_equal(back.lengths, g.lengths)
    assert np.array_equal(back.unbounded_hits, g.unbounded_hits)


def test_dcag_rejects_corrupt_files(tmp_path):
    from dca.exceptions import ParseError

    pts = np.random.default_rng(13).normal(size=(10, 2))
    save_graph(build_graph(pts, T=50), tmp_path / "g.dcag")
    blob = (tmp_path / "g.dcag").read_bytes()
    for bad in (b"XXXX" + blob[4:], blob[:-3], blob[:10]):
        (tmp_path / "bad.dcag").write_bytes(bad)
        with pytest.raises(ParseError):
            load_graph(tmp_path / "bad.dcag")
