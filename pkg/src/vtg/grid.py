"""Voxel grids on a metric, axis-aligned lattice.

Grids are stored as numpy arrays indexed ``[x, y, z]``. The on-disk formats
(``.vtg`` for occupancy, ``.vtf`` for scalar fields) linearize x-fastest.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np


class AlignmentError(ValueError):
    """Two grids that must share a frame do not."""


class InvalidInputError(ValueError):
    """Input data rejected before processing (non-finite values, bad shapes)."""


@dataclass(frozen=True)
class GridFrame:
    """Lattice geometry: ``dims`` voxels of edge ``voxel_size`` starting at ``origin``."""

    dims: tuple[int, int, int]
    voxel_size: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or len(origin) != 3:
            raise InvalidInputError("dims and origin must have three components")
        if min(dims) <= 0:
            raise InvalidInputError(f"dims must be positive, got {dims}")
        if not (self.voxel_size > 0 and math.isfinite(self.voxel_size)):
            raise InvalidInputError(f"voxel_size must be positive, got {self.voxel_size}")
        if not all(math.isfinite(o) for o in origin):
            raise InvalidInputError("origin must be finite")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))

    @classmethod
    def cube(cls, center, edge: float, dim: int) -> "GridFrame":
        """Cubic frame of ``dim``³ voxels with total edge length ``edge`` centred on ``center``."""
        center = np.asarray(center, dtype=float)
        return cls((dim, dim, dim), edge / dim, tuple(center - edge / 2.0))

    @classmethod
    def around_mesh(cls, mesh, dim: int, padding: float = 1.1) -> "GridFrame":
        """Cube centred on the mesh bounding box, edge = ``padding`` x largest extent."""
        lo, hi = mesh.bounds()
        extent = float(np.max(hi - lo))
        if extent <= 0:
            raise InvalidInputError("mesh has zero extent")
        return cls.cube((lo + hi) / 2.0, padding * extent, dim)

    def resampled(self, dim: int) -> "GridFrame":
        """Same cubic region at a different resolution."""
        edge = self.voxel_size * self.dims[0]
        if any(d * self.voxel_size != edge for d in self.dims):
            raise InvalidInputError("resampled() needs a cubic frame")
        return GridFrame((dim, dim, dim), edge / dim, self.origin)

    def as_float32(self) -> "GridFrame":
        """Frame with size/origin rounded to f32 so it survives a file round trip."""
        return GridFrame(
            self.dims,
            float(np.float32(self.voxel_size)),
            tuple(float(v) for v in np.asarray(self.origin, dtype=np.float32)),
        )

    @property
    def size(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.dims, dtype=float) * self.voxel_size

    def centers(self) -> np.ndarray:
        """Voxel centre coordinates, shape ``dims + (3,)``."""
        axes = [self.origin[a] + (np.arange(self.dims[a]) + 0.5) * self.voxel_size for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def index_to_point(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=float)
        return np.asarray(self.origin) + (idx + 0.5) * self.voxel_size


@dataclass(frozen=True)
class PointCloud:
    """Metric 3D points with optional per-point unit normals."""

    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(nrm) != len(pts):
                raise InvalidInputError("normals must match points")
            object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))

    def concat(self, other: "PointCloud") -> "PointCloud":
        normals = None
        if self.normals is not None and other.normals is not None:
            normals = np.vstack([self.normals, other.normals])
        return PointCloud(np.vstack([self.points, other.points]), normals)

    def save(self, path) -> None:
        np.savetxt(path, self.points, fmt="%.17g")

    @classmethod
    def load(cls, path) -> "PointCloud":
        data = np.loadtxt(path, ndmin=2)
        if data.size == 0:
            return cls.empty()
        return cls(data[:, :3])


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Binary occupancy over a :class:`GridFrame`.

    ``diagnostics`` carries producer notes (drop counts, watertightness) and is
    ignored by equality.
    """

    frame: GridFrame
    occupancy: np.ndarray
    diagnostics: Mapping = field(default_factory=dict)

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.shape != self.frame.dims:
            raise InvalidInputError(f"occupancy shape {occ.shape} != dims {self.frame.dims}")
        occ = occ.copy()
        occ.flags.writeable = False
        object.__setattr__(self, "occupancy", occ)

    @classmethod
    def empty(cls, frame: GridFrame) -> "VoxelGrid":
        return cls(frame, np.zeros(frame.dims, dtype=bool))

    @classmethod
    def from_indices(cls, frame: GridFrame, indices) -> "VoxelGrid":
        occ = np.zeros(frame.dims, dtype=bool)
        idx = np.asarray(indices, dtype=int).reshape(-1, 3)
        occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
        return cls(frame, occ)

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return self.frame == other.frame and np.array_equal(self.occupancy, other.occupancy)

    __hash__ = None

    @property
    def count(self) -> int:
        return int(self.occupancy.sum())

    def indices(self) -> np.ndarray:
        """Occupied voxel indices, shape (n, 3), in x-fastest order."""
        idx = np.argwhere(self.occupancy.transpose(2, 1, 0))
        return idx[:, ::-1]

    def to_points(self) -> PointCloud:
        return PointCloud(self.frame.index_to_point(self.indices()))

    def to_scalar(self) -> "ScalarGrid":
        return ScalarGrid(self.frame, self.occupancy.astype(float))

    def save(self, path) -> None:
        write_vtg(path, self)

    @classmethod
    def load(cls, path) -> "VoxelGrid":
        return read_vtg(path)


@dataclass(frozen=True, eq=False)
class ScalarGrid:
    """Real-valued field sampled at voxel centres of a :class:`GridFrame`."""

    frame: GridFrame
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.frame.dims:
            raise InvalidInputError(f"values shape {vals.shape} != dims {self.frame.dims}")
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("scalar grid values must be finite")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __eq__(self, other):
        if not isinstance(other, ScalarGrid):
            return NotImplemented
        return self.frame == other.frame and np.array_equal(self.values, other.values)

    __hash__ = None

    def save(self, path) -> None:
        write_vtf(path, self)

    @classmethod
    def load(cls, path) -> "ScalarGrid":
        return read_vtf(path)


def _check_aligned(a: VoxelGrid, b: VoxelGrid) -> None:
    if a.frame != b.frame:
        raise AlignmentError(f"grid frames differ: {a.frame} vs {b.frame}")


def voxelize_points(cloud: PointCloud, frame: GridFrame) -> VoxelGrid:
    """Mark every voxel containing at least one point.

    Points outside the frame are dropped; their number is reported as
    ``diagnostics["dropped"]``.
    """
    pts = cloud.points
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("point cloud contains non-finite coordinates")
    idx = np.floor((pts - np.asarray(frame.origin)) / frame.voxel_size).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < np.asarray(frame.dims)), axis=1)
    occ = np.zeros(frame.dims, dtype=bool)
    kept = idx[inside]
    occ[kept[:, 0], kept[:, 1], kept[:, 2]] = True
    return VoxelGrid(frame, occ, {"dropped": int((~inside).sum())})


def merge_grids(depth: VoxelGrid, tactile: VoxelGrid) -> VoxelGrid:
    """Voxelwise union of two aligned grids."""
    _check_aligned(depth, tactile)
    return VoxelGrid(depth.frame, depth.occupancy | tactile.occupancy)


def jaccard(a: VoxelGrid, b: VoxelGrid) -> float:
    """Intersection over union of the occupied sets; 1.0 when both are empty."""
    _check_aligned(a, b)
    union = np.count_nonzero(a.occupancy | b.occupancy)
    if union == 0:
        return 1.0
    return np.count_nonzero(a.occupancy & b.occupancy) / union


# --- file formats -----------------------------------------------------------

_MAGIC = b"VTGR"
_HEADER = struct.Struct("<4sI3If3f")
_OCC_VERSION = 1
_SCALAR_VERSION = 2


def _pack_header(frame: GridFrame, version: int) -> bytes:
    return _HEADER.pack(_MAGIC, version, *frame.dims, frame.voxel_size, *frame.origin)


def _unpack_header(buf: bytes, version: int) -> GridFrame:
    if len(buf) < _HEADER.size:
        raise InvalidInputError("truncated grid file")
    magic, ver, nx, ny, nz, size, ox, oy, oz = _HEADER.unpack_from(buf)
    if magic != _MAGIC:
        raise InvalidInputError(f"bad magic {magic!r}")
    if ver != version:
        raise InvalidInputError(f"expected version {version}, found {ver}")
    return GridFrame((nx, ny, nz), size, (ox, oy, oz))


def vtg_bytes(grid: VoxelGrid) -> bytes:
    bits = np.packbits(grid.occupancy.ravel(order="F"), bitorder="little")
    return _pack_header(grid.frame, _OCC_VERSION) + bits.tobytes()


def vtg_from_bytes(buf: bytes) -> VoxelGrid:
    frame = _unpack_header(buf, _OCC_VERSION)
    nbytes = (frame.size + 7) // 8
    if len(buf) != _HEADER.size + nbytes:
        raise InvalidInputError(f"occupancy payload is {len(buf) - _HEADER.size} bytes, expected {nbytes}")
    payload = np.frombuffer(buf, dtype=np.uint8, count=nbytes, offset=_HEADER.size)
    bits = np.unpackbits(payload, bitorder="little", count=frame.size).astype(bool)
    return VoxelGrid(frame, bits.reshape(frame.dims, order="F"))


def vtf_bytes(grid: ScalarGrid) -> bytes:
    vals = grid.values.ravel(order="F").astype("<f4")
    return _pack_header(grid.frame, _SCALAR_VERSION) + vals.tobytes()


def vtf_from_bytes(buf: bytes) -> ScalarGrid:
    frame = _unpack_header(buf, _SCALAR_VERSION)
    if len(buf) != _HEADER.size + 4 * frame.size:
        raise InvalidInputError(f"scalar payload is {len(buf) - _HEADER.size} bytes, expected {4 * frame.size}")
    vals = np.frombuffer(buf, dtype="<f4", count=frame.size, offset=_HEADER.size)
    return ScalarGrid(frame, vals.astype(float).reshape(frame.dims, order="F"))


def write_vtg(path, grid: VoxelGrid) -> None:
    Path(path).write_bytes(vtg_bytes(grid))


def read_vtg(path) -> VoxelGrid:
    return vtg_from_bytes(Path(path).read_bytes())


def write_vtf(path, grid: ScalarGrid) -> None:
    Path(path).write_bytes(vtf_bytes(grid))


def read_vtf(path) -> ScalarGrid:
    return vtf_from_bytes(Path(path).read_bytes())
