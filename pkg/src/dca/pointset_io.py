"""Point sets and their on-disk formats.

Two formats are supported:

``csv``
    One point per row, comma separated, no header unless ``header=True``.

``dcabin``
    Little-endian binary: the magic ``b"DCA1"``, ``u32`` count, ``u32`` dim,
    ``u8`` membership flag, ``count * dim`` float32 coordinates in row-major
    order and, when the flag is set, one ``u8`` membership tag per point
    (0 = REF, 1 = EVAL).
"""
from __future__ import annotations

import csv
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DimMismatch, EmptyInput, ParseError

logger = logging.getLogger(__name__)

REF = 0
EVAL = 1
_TAG_NAMES = {"ref": REF, "eval": EVAL, "REF": REF, "EVAL": EVAL}

DCABIN_MAGIC = b"DCA1"
_DCABIN_HEADER = struct.Struct("<4sIIB")


def _as_tag(membership) -> int:
    if isinstance(membership, str):
        try:
            return _TAG_NAMES[membership]
        except KeyError:
            raise ValueError(f"unknown membership tag {membership!r}") from None
    tag = int(membership)
    if tag not in (REF, EVAL):
        raise ValueError(f"unknown membership tag {membership!r}")
    return tag


@dataclass(frozen=True)
class PointSet:
    """An immutable, labelled collection of ``dim``-dimensional points.

    Point ``k`` has id ``k``; ids are therefore dense and 0-based by
    construction. Coordinates are held as float64 regardless of the source.
    """

    points: np.ndarray
    membership: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim != 2:
            raise DimMismatch(f"expected a 2D array of points, got shape {pts.shape}")
        if pts.shape[1] < 1:
            raise DimMismatch("points must have at least one coordinate")
        if not np.all(np.isfinite(pts)):
            raise ParseError("point coordinates must be finite")
        if self.membership is None:
            mem = np.full(len(pts), REF, dtype=np.uint8)
        else:
            mem = np.asarray(self.membership, dtype=np.uint8).copy()
        if mem.shape != (len(pts),):
            raise DimMismatch("membership must have one tag per point")
        if np.any(mem > EVAL):
            raise ValueError("membership tags must be 0 (REF) or 1 (EVAL)")
        pts.flags.writeable = False
        mem.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "membership", mem)

    @classmethod
    def empty(cls, dim: int, membership=REF) -> "PointSet":
        tag = _as_tag(membership)
        return cls(np.empty((0, dim)), np.full(0, tag, dtype=np.uint8))

    @classmethod
    def tagged(cls, points, membership) -> "PointSet":
        """Build a point set whose points all carry the same tag."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1)
        return cls(pts, np.full(len(pts), _as_tag(membership), dtype=np.uint8))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self.points))

    @property
    def n_ref(self) -> int:
        return int(np.count_nonzero(self.membership == REF))

    @property
    def n_eval(self) -> int:
        return int(np.count_nonzero(self.membership == EVAL))

    def __len__(self) -> int:
        return len(self.points)

    def with_membership(self, membership) -> "PointSet":
        return PointSet(self.points, np.full(len(self), _as_tag(membership), dtype=np.uint8))

    def duplicate_count(self) -> int:
        """Number of points whose coordinates repeat an earlier point."""
        if len(self) < 2:
            return 0
        return len(self) - len(np.unique(self.points, axis=0))


# QuerySet carries no membership; an all-REF PointSet is the same shape.
QuerySet = PointSet


def merge(r: PointSet, e: PointSet) -> PointSet:
    """Concatenate a reference and an evaluation set, reference first.

    Duplicate coordinates across the two sets stay distinct vertices.
    """
    if r.dim != e.dim:
        raise DimMismatch(f"reference dim {r.dim} != evaluation dim {e.dim}")
    points = np.vstack([r.points, e.points])
    membership = np.concatenate(
        [np.full(len(r), REF, dtype=np.uint8), np.full(len(e), EVAL, dtype=np.uint8)]
    )
    merged = PointSet(points, membership)
    dups = merged.duplicate_count()
    if dups:
        logger.warning("%d duplicate point(s) in merged set; they are kept as distinct vertices", dups)
    return merged


def _read_csv(path: Path, header: bool) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric cell in {row!r}") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DimMismatch(f"{path}:{lineno}: expected {width} columns, got {len(values)}")
            rows.append(values)
    if not rows:
        raise EmptyInput(f"{path}: no points")
    return np.array(rows, dtype=np.float64)


def _read_dcabin(path: Path):
    data = Path(path).read_bytes()
    if len(data) < _DCABIN_HEADER.size:
        raise ParseError(f"{path}: truncated dcabin header")
    magic, count, dim, flag = _DCABIN_HEADER.unpack_from(data)
    if magic != DCABIN_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if count == 0:
        raise EmptyInput(f"{path}: no points")
    if dim == 0:
        raise ParseError(f"{path}: zero dimension")
    offset = _DCABIN_HEADER.size
    n_coords = count * dim
    expected = offset + 4 * n_coords + (count if flag else 0)
    if len(data) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, found {len(data)}")
    coords = np.frombuffer(data, dtype="<f4", count=n_coords, offset=offset).reshape(count, dim)
    membership = None
    if flag:
        membership = np.frombuffer(data, dtype=np.uint8, count=count, offset=offset + 4 * n_coords)
        if np.any(membership > EVAL):
            raise ParseError(f"{path}: membership tags must be 0 or 1")
    return coords.astype(np.float64), membership


def load_pointset(path, membership=None, format: str = "csv", header: bool = False) -> PointSet:
    """Read a point set from ``path``.

    ``membership`` tags every point; when it is None the tags stored in a
    dcabin file are used, and everything else defaults to REF.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    if format == "csv":
        coords, stored = _read_csv(path, header), None
    elif format == "dcabin":
        coords, stored = _read_dcabin(path)
    else:
        raise ValueError(f"unknown format {format!r}")
    if membership is not None:
        mem = np.full(len(coords), _as_tag(membership), dtype=np.uint8)
    elif stored is not None:
        mem = stored
    else:
        mem = np.full(len(coords), REF, dtype=np.uint8)
    ps = PointSet(coords, mem)
    dups = ps.duplicate_count()
    if dups:
        logger.warning("%s: %d duplicate point(s)", path, dups)
    return ps


def save_pointset(ps: PointSet, path, format: str = "dcabin", with_membership: bool = True) -> None:
    """Write ``ps`` to ``path``. dcabin stores float32 coordinates."""
    path = Path(path)
    if format == "csv":
        np.savetxt(path, ps.points, delimiter=",", fmt="%.17g")
        return
    if format != "dcabin":
        raise ValueError(f"unknown format {format!r}")
    with open(path, "wb") as fh:
        fh.write(_DCABIN_HEADER.pack(DCABIN_MAGIC, len(ps), ps.dim, 1 if with_membership else 0))
        fh.write(np.ascontiguousarray(ps.points, dtype="<f4").tobytes())
        if with_membership:
            fh.write(ps.membership.astype(np.uint8).tobytes())
