"""Solid voxelization of triangle meshes.

A voxel is occupied when the solid bounded by the mesh overlaps the open
voxel cell. Surface voxels come from a separating-axis triangle/box test,
interior voxels from parity counting along +z rays through voxel centres.
"""

from __future__ import annotations

import warnings

import numpy as np

from .grid import GridFrame, VoxelGrid
from .mesh import TriMesh

# Shrinks cells so that faces lying exactly on a cell boundary do not mark
# the neighbouring cell.
_OPEN_CELL_SHRINK = 1e-9
# Ray offsets (in voxel units) keeping parity rays off mesh edges/vertices.
_RAY_JITTER = (1.2345678e-6, 2.7182818e-6)
_PAIR_CHUNK = 2_000_000


def voxelize_mesh(mesh: TriMesh, frame: GridFrame) -> VoxelGrid:
    """Occupancy of the solid bounded by ``mesh``.

    Non-watertight meshes get surface voxels only, a ``RuntimeWarning`` and
    ``diagnostics["watertight"] = False``.
    """
    occ = np.zeros(frame.dims, dtype=bool)
    if mesh.is_empty:
        return VoxelGrid(frame, occ, {"watertight": True, "surface_only": False})
    tri = mesh.triangles()
    _mark_surface(tri, frame, occ)
    watertight = mesh.is_watertight()
    if watertight:
        occ |= _parity_fill(tri, frame)
    else:
        warnings.warn("mesh is not watertight; voxelizing surface only", RuntimeWarning, stacklevel=2)
    return VoxelGrid(frame, occ, {"watertight": watertight, "surface_only": not watertight})


def _subdivide(tri: np.ndarray, max_edge: float) -> np.ndarray:
    """4-way split until every edge is at most ``max_edge`` long."""
    out = []
    while len(tri):
        e = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 1], tri[:, 0] - tri[:, 2]], axis=1)
        longest = np.linalg.norm(e, axis=2).max(axis=1)
        small = longest <= max_edge
        out.append(tri[small])
        big = tri[~small]
        if not len(big):
            break
        a, b, c = big[:, 0], big[:, 1], big[:, 2]
        ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
        tri = np.concatenate([
            np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
            np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1),
        ])
    return np.concatenate(out) if out else np.zeros((0, 3, 3))


def _candidate_pairs(lo_idx: np.ndarray, hi_idx: np.ndarray):
    """Expand per-item inclusive index boxes into (item, i, j, k) rows."""
    span = hi_idx - lo_idx + 1
    counts = span.prod(axis=1)
    item = np.repeat(np.arange(len(counts)), counts)
    start = np.cumsum(counts) - counts
    local = np.arange(counts.sum()) - np.repeat(start, counts)
    sx = span[item, 0]
    sy = span[item, 1]
    i = local % sx
    j = (local // sx) % sy
    k = local // (sx * sy)
    return item, lo_idx[item] + np.stack([i, j, k], axis=1)


def _mark_surface(tri: np.ndarray, frame: GridFrame, occ: np.ndarray) -> None:
    size = frame.voxel_size
    origin = np.asarray(frame.origin)
    dims = np.asarray(frame.dims)
    tri = _subdivide(tri, 1.5 * size)
    lo = np.floor((tri.min(axis=1) - origin) / size).astype(np.int64)
    hi = np.floor((tri.max(axis=1) - origin) / size).astype(np.int64)
    keep = np.all(hi >= 0, axis=1) & np.all(lo < dims, axis=1)
    tri, lo, hi = tri[keep], np.clip(lo[keep], 0, dims - 1), np.clip(hi[keep], 0, dims - 1)
    if not len(tri):
        return
    counts = (hi - lo + 1).prod(axis=1)
    bounds = np.searchsorted(np.cumsum(counts), np.arange(0, counts.sum(), _PAIR_CHUNK), side="right")
    bounds = list(bounds) + [len(tri)]
    half = 0.5 * size * (1.0 - _OPEN_CELL_SHRINK)
    for s, e in zip(bounds[:-1], bounds[1:]):
        if s >= e:
            continue
        item, vox = _candidate_pairs(lo[s:e], hi[s:e])
        centers = origin + (vox + 0.5) * size
        hit = _tri_box_overlap(tri[s:e][item], centers, half)
        v = vox[hit]
        occ[v[:, 0], v[:, 1], v[:, 2]] = True


def _tri_box_overlap(tri: np.ndarray, centers: np.ndarray, half: float) -> np.ndarray:
    """Separating axis test of triangles (n,3,3) against cubes of half-size ``half``."""
    v = tri - centers[:, None, :]
    f = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]], axis=1)
    ok = np.ones(len(v), dtype=bool)
    # Box face normals.
    ok &= np.all(v.min(axis=1) <= half, axis=1) & np.all(v.max(axis=1) >= -half, axis=1)
    # Triangle plane.
    n = np.cross(f[:, 0], f[:, 1])
    d = np.einsum("ij,ij->i", n, v[:, 0])
    ok &= np.abs(d) <= half * np.abs(n).sum(axis=1)
    # Edge cross products: axis e_a x f_j.
    for a in range(3):
        unit = np.zeros(3)
        unit[a] = 1.0
        for j in range(3):
            axis = np.cross(unit, f[:, j])
            p = np.einsum("ikl,il->ik", v, axis)
            r = half * np.abs(axis).sum(axis=1)
            ok &= (p.min(axis=1) <= r) & (p.max(axis=1) >= -r)
    return ok


def _edge_fn(p, q, x, y):
    """2D orientation of (x, y) against segment p->q, exactly antisymmetric in (p, q)."""
    swap = (p[:, 0] > q[:, 0]) | ((p[:, 0] == q[:, 0]) & (p[:, 1] > q[:, 1]))
    a = np.where(swap[:, None], q, p)
    b = np.where(swap[:, None], p, q)
    val = (b[:, 0] - a[:, 0]) * (y - a[:, 1]) - (b[:, 1] - a[:, 1]) * (x - a[:, 0])
    return np.where(swap, -val, val)


def _is_top_left(p, q):
    # For CCW triangles: top edge is horizontal going left; left edges go down.
    dx = q[:, 0] - p[:, 0]
    dy = q[:, 1] - p[:, 1]
    return ((dy == 0) & (dx < 0)) | (dy < 0)


def _parity_fill(tri: np.ndarray, frame: GridFrame) -> np.ndarray:
    size = frame.voxel_size
    origin = np.asarray(frame.origin)
    nx, ny, nz = frame.dims
    xy = tri[:, :, :2].copy()
    area2 = (xy[:, 1, 0] - xy[:, 0, 0]) * (xy[:, 2, 1] - xy[:, 0, 1]) - \
            (xy[:, 1, 1] - xy[:, 0, 1]) * (xy[:, 2, 0] - xy[:, 0, 0])
    keep = area2 != 0
    tri, xy, area2 = tri[keep], xy[keep], area2[keep]
    cw = area2 < 0
    tri[cw] = tri[cw][:, [0, 2, 1]]
    xy = tri[:, :, :2]

    jit = np.asarray(_RAY_JITTER) * size
    col_origin = origin[:2] + 0.5 * size + jit
    lo = np.ceil((xy.min(axis=1) - col_origin) / size).astype(np.int64)
    hi = np.floor((xy.max(axis=1) - col_origin) / size).astype(np.int64)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, [nx - 1, ny - 1])
    keep = np.all(hi >= lo, axis=1)
    tri, xy, lo, hi = tri[keep], xy[keep], lo[keep], hi[keep]
    toggles = np.zeros((nx, ny, nz + 1), dtype=np.int64)
    if not len(tri):
        return np.zeros(frame.dims, dtype=bool)

    lo3 = np.concatenate([lo, np.zeros((len(lo), 1), np.int64)], axis=1)
    hi3 = np.concatenate([hi, np.zeros((len(hi), 1), np.int64)], axis=1)
    counts = (hi - lo + 1).prod(axis=1)
    bounds = np.searchsorted(np.cumsum(counts), np.arange(0, counts.sum(), _PAIR_CHUNK), side="right")
    bounds = list(bounds) + [len(tri)]
    for s, e in zip(bounds[:-1], bounds[1:]):
        if s >= e:
            continue
        item, cols = _candidate_pairs(lo3[s:e], hi3[s:e])
        t = tri[s:e][item]
        px = col_origin[0] + cols[:, 0] * size
        py = col_origin[1] + cols[:, 1] * size
        inside = np.ones(len(item), dtype=bool)
        w = []
        for a, b in ((1, 2), (2, 0), (0, 1)):
            p, q = t[:, a, :2], t[:, b, :2]
            ef = _edge_fn(p, q, px, py)
            inside &= (ef > 0) | ((ef == 0) & _is_top_left(p, q))
            w.append(ef)
        if not inside.any():
            continue
        w = np.stack(w, axis=1)[inside]
        t = t[inside]
        z = (w * t[:, :, 2]).sum(axis=1) / w.sum(axis=1)
        k = np.ceil((z - origin[2]) / size - 0.5).astype(np.int64)
        k = np.clip(k, 0, nz)
        c = cols[inside]
        np.add.at(toggles, (c[:, 0], c[:, 1], k), 1)
    parity = np.cumsum(toggles, axis=2)[:, :, :nz] % 2
    return parity.astype(bool)
