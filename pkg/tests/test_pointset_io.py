import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dca.exceptions import DimMismatch, EmptyInput, ParseError
from dca.pointset_io import EVAL, REF, PointSet, load_pointset, merge, save_pointset


def test_csv_basic(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("0,0\n1,0\n0,1\n")
    ps = load_pointset(p, membership="ref")
    assert ps.dim == 2 and len(ps) == 3
    assert ps.membership.tolist() == [REF] * 3
    assert ps.ids.tolist() == [0, 1, 2]
    assert ps.points.dtype == np.float64


def test_csv_header_is_skipped_only_on_request(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("x,y\n1,2\n3,4\n")
    with pytest.raises(ParseError):
        load_pointset(p)
    ps = load_pointset(p, header=True)
    assert ps.points.tolist() == [[1, 2], [3, 4]]


def test_csv_ragged_rows(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(DimMismatch):
        load_pointset(p)


def test_csv_non_numeric(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3,abc\n")
    with pytest.raises(ParseError):
        load_pointset(p)


def test_csv_empty(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("\n")
    with pytest.raises(EmptyInput):
        load_pointset(p)


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_pointset(tmp_path / "nope.csv")


def test_non_finite_rejected():
    with pytest.raises(ParseError):
        PointSet(np.array([[0.0, np.nan]]))


def test_dcabin_hand_written(tmp_path):
    p = tmp_path / "two.dcabin"
    coords = np.array([1.5, -2.0, 0.25, 3.0, 4.0, 5.0], dtype="<f4")
    p.write_bytes(struct.pack("<4sIIB", b"DCA1", 2, 3, 0) + coords.tobytes())
    ps = load_pointset(p, format="dcabin")
    assert ps.dim == 3 and len(ps) == 2
    assert ps.points.tolist() == [[1.5, -2.0, 0.25], [3.0, 4.0, 5.0]]
    assert ps.membership.tolist() == [REF, REF]


def test_dcabin_membership_block(tmp_path):
    p = tmp_path / "m.dcabin"
    ps = PointSet(np.arange(6.0).reshape(3, 2), [REF, EVAL, EVAL])
    save_pointset(ps, p)
    back = load_pointset(p, format="dcabin")
    assert back.membership.tolist() == [REF, EVAL, EVAL]
    # an explicit tag overrides the stored block
    assert load_pointset(p, membership=EVAL, format="dcabin").n_eval == 3


@pytest.mark.parametrize(
    "blob",
    [b"XXXX" + bytes(9), b"DCA1", struct.pack("<4sIIB", b"DCA1", 2, 2, 0) + bytes(4)],
)
def test_dcabin_malformed(tmp_path, blob):
    p = tmp_path / "bad.dcabin"
    p.write_bytes(blob)
    with pytest.raises(ParseError):
        load_pointset(p, format="dcabin")


f32_values = st.floats(width=32, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(
    coords=st.integers(1, 30).flatmap(
        lambda n: st.integers(1, 6).flatmap(lambda d: arrays(np.float32, (n, d), elements=f32_values))
    ),
    data=st.data(),
)
def test_dcabin_round_trip_is_bit_exact(tmp_path_factory, coords, data):
    mem = data.draw(arrays(np.uint8, len(coords), elements=st.integers(0, 1)))
    ps = PointSet(coords.astype(np.float64), mem)
    p = tmp_path_factory.mktemp("rt") / "ps.dcabin"
    save_pointset(ps, p)
    back = load_pointset(p, format="dcabin")
    assert back.points.tobytes() == ps.points.tobytes()
    assert np.array_equal(back.membership, ps.membership)
    assert np.array_equal(back.ids, ps.ids)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 5)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_csv_round_trip_float64(tmp_path_factory, coords):
    p = tmp_path_factory.mktemp("csv") / "ps.csv"
    save_pointset(PointSet(coords), p, format="csv")
    assert np.array_equal(load_pointset(p).points, coords)


def test_merge_orders_reference_first():
    r = PointSet.tagged(np.zeros((3, 2)) + np.arange(3)[:, None], REF)
    e = PointSet.tagged(np.ones((2, 2)) * 10, EVAL)
    m = merge(r, e)
    assert len(m) == 5
    assert m.ids.tolist() == [0, 1, 2, 3, 4]
    assert m.membership.tolist() == [REF, REF, REF, EVAL, EVAL]
    assert np.array_equal(m.points[:3], r.points)


def test_merge_with_empty_eval():
    m = merge(PointSet.tagged([[1.0, 2.0]], REF), PointSet.empty(2, EVAL))
    assert len(m) == 1 and m.n_eval == 0


def test_merge_dim_mismatch():
    with pytest.raises(DimMismatch):
        merge(PointSet.tagged(np.zeros((1, 2)), REF), PointSet.tagged(np.zeros((1, 3)), EVAL))


def test_merge_keeps_duplicates(caplog):
    r = PointSet.tagged([[0.0, 0.0], [1.0, 1.0]], REF)
    e = PointSet.tagged([[0.0, 0.0]], EVAL)
    with caplog.at_level("WARNING"):
        m = merge(r, e)
    assert len(m) == 3
    assert "duplicate" in caplog.text


def test_pointset_is_immutable():
    ps = PointSet(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ps.points[0, 0] = 1.0
