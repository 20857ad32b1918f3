"""Marching cubes, Laplacian smoothing and surface distance metrics."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .grid import GridFrame, InvalidInputError, ScalarGrid, VoxelGrid
from .mesh import TriMesh
from .voxelize import voxelize_mesh

# Cube corner c sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
CORNER_OFFSETS = np.array([[c & 1, (c >> 1) & 1, (c >> 2) & 1] for c in range(8)])

# Edge e joins two corners that differ along one axis; listed x-edges, y-edges, z-edges.
EDGE_CORNERS = np.array([
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
])
EDGE_AXIS = np.repeat(np.arange(3), 4)

# Face corners in counter-clockwise order seen from outside the cube.
FACE_CORNERS = (
    (0, 4, 6, 2), (1, 3, 7, 5),
    (0, 1, 5, 4), (2, 6, 7, 3),
    (0, 2, 3, 1), (4, 5, 7, 6),
)


def _edge_lookup():
    table = {}
    for e, (a, b) in enumerate(EDGE_CORNERS):
        table[(a, b)] = table[(b, a)] = e
    return table


def _edge_faces():
    lookup = _edge_lookup()
    faces = [set() for _ in range(12)]
    for f, corners in enumerate(FACE_CORNERS):
        for i in range(4):
            faces[lookup[(corners[i], corners[(i + 1) % 4])]].add(f)
    return faces


def _build_case_table():
    """Triangles per corner configuration.

    On each face, a surface segment runs from the edge where the CCW boundary
    walk enters the inside region to the next edge where it leaves. That
    choice depends only on the face's own corners, so neighbouring cubes
    always agree on shared faces and the output is crack-free; ambiguous
    faces keep inside corners apart.
    """
    lookup = _edge_lookup()
    edge_faces = _edge_faces()
    table = []
    for case in range(256):
        inside = [(case >> c) & 1 for c in range(8)]
        nxt = {}
        for corners in FACE_CORNERS:
            kinds = []
            for i in range(4):
                a, b = corners[i], corners[(i + 1) % 4]
                if inside[a] != inside[b]:
                    kinds.append((i, lookup[(a, b)], "exit" if inside[a] else "entry"))
            for pos, (i, edge, kind) in enumerate(kinds):
                if kind != "entry":
                    continue
                for step in range(1, len(kinds)):
                    _, other, okind = kinds[(pos + step) % len(kinds)]
                    if okind == "exit":
                        nxt[edge] = other
                        break
        tris = []
        seen = set()
        for start in sorted(nxt):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            while nxt[loop[-1]] != start:
                loop.append(nxt[loop[-1]])
                seen.add(loop[-1])
            tris.extend(_fan(loop, edge_faces))
        table.append(tris)
    return table


def _fan(loop, edge_faces):
    """Fan-triangulate a loop, preferring an apex whose diagonals avoid cube faces."""
    n = len(loop)
    best, best_bad = 0, None
    for s in range(n):
        bad = sum(1 for i in range(2, n - 1)
                  if edge_faces[loop[s]] & edge_faces[loop[(s + i) % n]])
        if best_bad is None or bad < best_bad:
            best, best_bad = s, bad
    loop = loop[best:] + loop[:best]
    return [(loop[0], loop[i], loop[i + 1]) for i in range(1, n - 1)]


_CASES = _build_case_table()
MAX_TRIS = max(len(t) for t in _CASES)
TRI_COUNT = np.array([len(t) for t in _CASES])
TRI_TABLE = np.full((256, MAX_TRIS, 3), -1, dtype=np.int64)
for _c, _t in enumerate(_CASES):
    if _t:
        TRI_TABLE[_c, :len(_t)] = _t


def marching_cubes(field: ScalarGrid, iso: float, close: bool = True) -> TriMesh:
    """Triangulate the level set ``field == iso``.

    Lattice points are voxel centres; the inside is ``value >= iso`` and faces
    are oriented to point out of it. With ``close`` the field is padded by one
    outside layer so surfaces touching the frame border are capped.
    """
    vals = np.asarray(field.values, dtype=float)
    offset = 0.5
    if close:
        outside = min(float(vals.min()), iso) - 1.0
        vals = np.pad(vals, 1, constant_values=outside)
        offset = -0.5
    X, Y, Z = vals.shape
    if min(X, Y, Z) < 2:
        return TriMesh.empty()
    inside = vals >= iso
    case = np.zeros((X - 1, Y - 1, Z - 1), dtype=np.int64)
    for c, (i, j, k) in enumerate(CORNER_OFFSETS):
        case |= inside[i:X - 1 + i, j:Y - 1 + j, k:Z - 1 + k].astype(np.int64) << c
    cubes = np.argwhere((case != 0) & (case != 255))
    if not len(cubes):
        return TriMesh.empty()
    ccase = case[cubes[:, 0], cubes[:, 1], cubes[:, 2]]
    ntri = TRI_COUNT[ccase]
    owner = np.repeat(np.arange(len(cubes)), ntri)
    slot = np.arange(ntri.sum()) - np.repeat(np.cumsum(ntri) - ntri, ntri)
    local = TRI_TABLE[ccase[owner], slot]                     # (T, 3) local edge ids

    base = cubes[owner][:, None, :] + CORNER_OFFSETS[EDGE_CORNERS[local, 0]]
    axis = EDGE_AXIS[local]
    npts = X * Y * Z
    gid = axis * npts + (base[..., 0] * Y + base[..., 1]) * Z + base[..., 2]
    uniq, inv = np.unique(gid.ravel(), return_inverse=True)

    ax = uniq // npts
    rem = uniq % npts
    p0 = np.stack([rem // (Y * Z), (rem // Z) % Y, rem % Z], axis=1)
    p1 = p0.copy()
    p1[np.arange(len(p1)), ax] += 1
    v0 = vals[p0[:, 0], p0[:, 1], p0[:, 2]]
    v1 = vals[p1[:, 0], p1[:, 1], p1[:, 2]]
    t = (iso - v0) / (v1 - v0)
    pos = p0 + t[:, None] * (p1 - p0)
    verts = np.asarray(field.frame.origin) + (pos + offset) * field.frame.voxel_size
    return TriMesh(verts, inv.reshape(-1, 3))


def occupancy_mesh(grid: VoxelGrid) -> TriMesh:
    """Closed surface around the occupied voxels of a binary grid (iso 0.5)."""
    return marching_cubes(grid.to_scalar(), 0.5)


def laplacian_smooth(mesh: TriMesh, iterations: int = 3, lam: float = 0.5) -> TriMesh:
    """Uniform-weight umbrella smoothing, ``v += lam * (mean(neighbours) - v)``."""
    if not 0 < lam <= 1:
        raise InvalidInputError("lambda must be in (0, 1]")
    if iterations <= 0 or mesh.is_empty:
        return mesh
    n = len(mesh.vertices)
    e = mesh.unique_edges()
    adj = sparse.coo_matrix((np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
                            shape=(n, n)).tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    has = deg > 0
    v = mesh.vertices.copy()
    for _ in range(iterations):
        mean = adj @ v
        mean[has] /= deg[has, None]
        v[has] += lam * (mean[has] - v[has])
    return TriMesh(v, mesh.faces)


# --- distances ----------------------------------------------------------------

def closest_point_on_triangles(p, a, b, c):
    """Closest points on triangles (a, b, c) to points p; all arrays (n, 3)."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
        out = a + ab * v[:, None] + ac * w[:, None]
        done = np.zeros(len(p), dtype=bool)

        def assign(mask, value):
            nonlocal done
            m = mask & ~done
            out[m] = value[m]
            done |= m

        assign((d1 <= 0) & (d2 <= 0), a)
        assign((d3 >= 0) & (d4 <= d3), b)
        t_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
        assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + ab * t_ab[:, None])
        assign((d6 >= 0) & (d5 <= d6), c)
        t_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
        assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + ac * t_ac[:, None])
        den_bc = (d4 - d3) + (d5 - d6)
        t_bc = np.where(den_bc != 0, (d4 - d3) / den_bc, 0.0)
        assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + (c - b) * t_bc[:, None])
        # Degenerate triangles that fell through: use the nearest vertex.
        bad = ~done & (denom == 0)
        if bad.any():
            cand = np.stack([a, b, c], axis=1)[bad]
            d = np.linalg.norm(cand - p[bad][:, None], axis=2)
            out[bad] = cand[np.arange(len(cand)), d.argmin(axis=1)]
    return out


def point_mesh_distance(points, mesh: TriMesh, chunk: int = 1_000_000) -> np.ndarray:
    """Exact unsigned distance from each point to the mesh surface.

    Triangle centroids in a k-d tree give an upper bound; every triangle whose
    bounding sphere could beat it is then checked exactly.
    """
    if mesh.is_empty:
        raise InvalidInputError("distance to an empty mesh is undefined")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    tri = mesh.triangles()
    cen = tri.mean(axis=1)
    rad = np.linalg.norm(tri - cen[:, None], axis=2).max(axis=1)
    tree = cKDTree(cen)
    _, near = tree.query(pts, k=1)
    best = np.linalg.norm(pts - closest_point_on_triangles(pts, *tri[near].transpose(1, 0, 2)), axis=1)
    cand = tree.query_ball_point(pts, best + rad.max())
    counts = np.fromiter((len(c) for c in cand), dtype=np.int64, count=len(pts))
    flat = np.fromiter((i for c in cand for i in c), dtype=np.int64, count=int(counts.sum()))
    owner = np.repeat(np.arange(len(pts)), counts)
    for s in range(0, len(flat), chunk):
        o, t = owner[s:s + chunk], flat[s:s + chunk]
        q = closest_point_on_triangles(pts[o], tri[t, 0], tri[t, 1], tri[t, 2])
        np.minimum.at(best, o, np.linalg.norm(pts[o] - q, axis=1))
    return best


@dataclass(frozen=True)
class HausdorffReport:
    """Directed and symmetric mean surface distances, in millimetres."""

    mean_a_to_b: float
    mean_b_to_a: float
    symmetric_mean: float
    max_a_to_b: float
    max_b_to_a: float
    samples_a: int
    samples_b: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def _surface_rng(mesh: TriMesh, seed: int) -> np.random.Generator:
    # Keyed on connectivity only, so rigid motions of a mesh reuse its samples
    # and the report does not depend on argument order.
    digest = hashlib.blake2b(np.ascontiguousarray(mesh.faces, dtype="<i8").tobytes(), digest_size=8)
    return np.random.default_rng([seed, int.from_bytes(digest.digest(), "little")])


def hausdorff(a: TriMesh, b: TriMesh, samples: int = 10_000, seed: int = 0) -> HausdorffReport:
    """Mean/max surface-to-surface distances between two meshes (metres in, mm out)."""
    if a.is_empty or b.is_empty:
        raise InvalidInputError("Hausdorff distance is undefined for an empty mesh")
    if samples < 1:
        raise InvalidInputError("samples must be >= 1")
    pa = a.sample_surface(samples, _surface_rng(a, seed))
    pb = b.sample_surface(samples, _surface_rng(b, seed))
    dab = point_mesh_distance(pa, b) * 1000.0
    dba = point_mesh_distance(pb, a) * 1000.0
    mab, mba = float(dab.mean()), float(dba.mean())
    return HausdorffReport(mab, mba, (mab + mba) / 2.0, float(dab.max()), float(dba.max()),
                           samples, samples)


def eval_frame(frame: GridFrame, dim: int = 80) -> GridFrame:
    """Evaluation lattice covering the same cube as ``frame``."""
    return frame.resampled(dim)


def mesh_to_eval_grid(mesh: TriMesh, frame80: GridFrame) -> VoxelGrid:
    """Voxelize a completion (or ground truth) for Jaccard scoring."""
    return voxelize_mesh(mesh, frame80)
