import sys

import numpy as np
import pytest

from dca.delaunay import ApproxDelaunayGraph
from dca.oracle import SyntheticSpec, generate
from dca.pointset_io import merge


def graph_from_edges(n, edges, lengths=None, hits=None, T=100, unbounded=None):
    """Hand-built graph; hit counts default to one ray per direction."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    edges = np.sort(edges, axis=1)
    if lengths is None:
        lengths = np.ones(len(edges))
    if hits is None:
        hits = np.ones((len(edges), 2), dtype=np.int64)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    hits = np.asarray(hits, dtype=np.int64)[order]
    out = np.zeros(n, dtype=np.int64)
    np.add.at(out, edges[order, 0], hits[:, 0])
    np.add.at(out, edges[order, 1], hits[:, 1])
    return ApproxDelaunayGraph(
        n_vertices=n,
        dim=2,
        rays_per_vertex=T,
        edges=edges[order],
        lengths=np.asarray(lengths, dtype=np.float64)[order],
        hits=hits,
        unbounded_hits=T - out if unbounded is None else np.asarray(unbounded),
    )


@pytest.fixture(scope="session")
def three_blobs():
    """Three well-separated 3-D blobs, 60 REF + 60 EVAL points each."""
    data = generate(SyntheticSpec(n_clusters=3, points_per_cluster=60, dim=3, seed=11))
    return data, merge(data.ref, data.eval)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(mod.format_line(k))
