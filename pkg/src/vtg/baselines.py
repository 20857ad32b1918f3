"""Alternative visual-tactile completion methods and the CNN mesh wrapper.

All completions take metric point clouds (or grids) in the camera frame and
return a :class:`TriMesh` in the same frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .grid import GridFrame, InvalidInputError, PointCloud, ScalarGrid, VoxelGrid, voxelize_points
from .mesh import TriMesh
from .meshing import laplacian_smooth, marching_cubes
from .net import forward, select_input
from .synth.tactile import make_rng

SMOOTH_ITERATIONS = 3
SMOOTH_LAMBDA = 0.5
# Face budget when refining a hull before smoothing.
MAX_REFINED_FACES = 200_000


class DegenerateInputError(InvalidInputError):
    pass


class GpisError(RuntimeError):
    pass


def _combined(depth: PointCloud, tactile: PointCloud) -> np.ndarray:
    pts = np.vstack([depth.points, tactile.points])
    if not len(pts):
        raise DegenerateInputError("combined depth and tactile cloud is empty")
    return pts


def partial_completion(depth: PointCloud, tactile: PointCloud, frame: GridFrame,
                       iterations: int = SMOOTH_ITERATIONS, lam: float = SMOOTH_LAMBDA) -> TriMesh:
    """Mesh only what was observed: voxelize the clouds, isosurface, smooth."""
    grid = voxelize_points(PointCloud(_combined(depth, tactile)), frame)
    mesh = marching_cubes(grid.to_scalar(), 0.5)
    return laplacian_smooth(mesh, iterations, lam)


def convex_hull(points) -> TriMesh:
    """Outward-oriented convex hull of a point set (Qhull)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 4:
        raise DegenerateInputError(f"convex hull needs at least 4 points, got {len(pts)}")
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[0] == 0 or sv[2] <= 1e-12 * sv[0]:
        raise DegenerateInputError("points are coplanar or collinear")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateInputError(str(exc)) from exc
    faces = hull.simplices.copy()
    tri = pts[faces]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.einsum("ij,ij->i", normal, hull.equations[:, :3]) < 0
    faces[flip] = faces[flip][:, ::-1]
    return TriMesh(pts, faces).compacted()


def refine(mesh: TriMesh, max_edge: float, max_faces: int = MAX_REFINED_FACES) -> TriMesh:
    """Midpoint-subdivide until no edge exceeds ``max_edge`` (or the face budget is hit)."""
    if max_edge <= 0:
        raise InvalidInputError("max_edge must be positive")
    levels = 0
    longest = mesh.max_edge_length()
    while longest > max_edge and len(mesh.faces) * 4 ** (levels + 1) <= max_faces:
        levels += 1
        longest /= 2
    return mesh.subdivided(levels)


def convex_hull_completion(depth: PointCloud, tactile: PointCloud, max_edge: float | None = None,
                           iterations: int = SMOOTH_ITERATIONS, lam: float = SMOOTH_LAMBDA) -> TriMesh:
    """Convex hull of the combined cloud, then Laplacian smoothing.

    A hull has few, large faces, and uniform Laplacian smoothing would pull
    its handful of vertices towards the centroid. With ``max_edge`` set
    (typically the evaluation voxel size) the hull is first refined so the
    smoothing only rounds its creases.
    """
    hull = convex_hull(_combined(depth, tactile))
    if max_edge is not None:
        hull = refine(hull, max_edge)
    return laplacian_smooth(hull, iterations, lam)


def estimate_normals(cloud: PointCloud, k: int = 10, camera_origin=(0.0, 0.0, 0.0),
                     kind: str = "depth") -> PointCloud:
    """Attach unit normals facing ``camera_origin``.

    ``kind="depth"`` fits a plane to each point's k nearest neighbours and
    takes its normal; points whose neighbourhood has rank < 2 get NaN normals.
    ``kind="tactile"`` points every normal straight at the camera.
    """
    pts = cloud.points
    cam = np.asarray(camera_origin, dtype=float)
    to_cam = cam - pts
    if kind == "tactile":
        lens = np.linalg.norm(to_cam, axis=1, keepdims=True)
        normals = np.where(lens > 0, to_cam / np.where(lens > 0, lens, 1.0), np.nan)
        return PointCloud(pts, normals)
    if kind != "depth":
        raise InvalidInputError(f"unknown normal kind {kind!r}")
    if len(pts) == 0:
        return PointCloud(pts, np.zeros((0, 3)))
    if len(pts) < k + 1:
        raise InvalidInputError(f"need at least k+1={k + 1} points for PCA normals, got {len(pts)}")
    _, nbr = cKDTree(pts).query(pts, k=k + 1)
    nb = pts[nbr]
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0]
    sign = np.sign(np.einsum("ij,ij->i", normals, to_cam))
    normals = normals * np.where(sign == 0, 1.0, sign)[:, None]
    degenerate = evals[:, 1] <= 1e-12 * np.maximum(evals[:, 2], 1e-300)
    normals[degenerate] = np.nan
    return PointCloud(pts, normals)


@dataclass(frozen=True)
class GpisConfig:
    M: int = 300
    s: float = 0.001
    n: int = 40
    d: float = 0.0005
    k_normals: int = 10
    length_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.M < 4 or self.s <= 0 or self.n < 8 or self.d <= 0:
            raise InvalidInputError("invalid GPIS configuration")
        if not 0 < self.length_fraction <= 1:
            raise InvalidInputError("length_fraction must lie in (0, 1]")


def downsample(points: np.ndarray, m: int, seed: int = 0) -> np.ndarray:
    """Seeded uniform subset of ``m`` points, independent of input order."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    pts = pts[np.lexsort(pts.T[::-1])]
    if len(pts) <= m:
        return pts
    pick = np.sort(make_rng(seed, 0xD5).choice(len(pts), size=m, replace=False))
    return pts[pick]


class GaussianProcess:
    """Zero-mean GP regression with a squared-exponential kernel."""

    def __init__(self, x, y, length: float, noise: float):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.length = float(length)
        self.noise = float(noise)
        k = self.kernel(self.x, self.x)
        s2 = self.noise ** 2
        base = k + s2 * np.eye(len(k))
        jitter = 0.0
        for scale in (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4):
            jitter = scale * s2
            try:
                self._chol = cho_factor(base + jitter * np.eye(len(k)), lower=True)
                break
            except LinAlgError:
                continue
        else:
            raise GpisError("kernel matrix is not positive definite even with jitter")
        self.jitter = jitter
        self.alpha = cho_solve(self._chol, self.y)

    def kernel(self, a, b):
        sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
        return np.exp(-np.maximum(sq, 0.0) / (2.0 * self.length ** 2))

    def mean(self, q, chunk: int = 20_000) -> np.ndarray:
        q = np.asarray(q, dtype=float).reshape(-1, 3)
        out = np.empty(len(q))
        for s in range(0, len(q), chunk):
            out[s:s + chunk] = self.kernel(q[s:s + chunk], self.x) @ self.alpha
        return out


def gpis_observations(depth: PointCloud, tactile: PointCloud, cfg: GpisConfig, camera_origin):
    """Surface points with value 0 plus +d (outside) / -d (inside) offset points."""
    sub = PointCloud(downsample(depth.points, cfg.M, cfg.seed))
    parts = []
    if len(sub):
        parts.append(estimate_normals(sub, min(cfg.k_normals, len(sub) - 1), camera_origin, "depth"))
    if len(tactile):
        parts.append(estimate_normals(tactile, kind="tactile", camera_origin=camera_origin))
    if not parts:
        raise DegenerateInputError("GPIS needs at least one observed point")
    pts = np.vstack([p.points for p in parts])
    nrm = np.vstack([p.normals for p in parts])
    ok = np.all(np.isfinite(nrm), axis=1)
    pts, nrm = pts[ok], nrm[ok]
    if not len(pts):
        raise DegenerateInputError("no observation with a valid normal")
    x = np.vstack([pts, pts + cfg.d * nrm, pts - cfg.d * nrm])
    y = np.concatenate([np.zeros(len(pts)), np.full(len(pts), cfg.d), np.full(len(pts), -cfg.d)])
    return x, y, pts


def gpis_model(depth: PointCloud, tactile: PointCloud, cfg: GpisConfig,
               camera_origin=(0.0, 0.0, 0.0)) -> GaussianProcess:
    x, y, surface = gpis_observations(depth, tactile, cfg, camera_origin)
    lo, hi = surface.min(axis=0), surface.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    if diag == 0:
        diag = cfg.d * 10
    return GaussianProcess(x, y, cfg.length_fraction * diag, cfg.s)


def gpis_field(model: GaussianProcess, frame: GridFrame, n: int) -> ScalarGrid:
    """Posterior mean on an n^3 lattice covering ``frame``."""
    lattice = frame.resampled(n)
    vals = model.mean(lattice.centers().reshape(-1, 3))
    return ScalarGrid(lattice, vals.reshape(lattice.dims))


def gpis_completion(depth: PointCloud, tactile: PointCloud, cfg: GpisConfig, camera_origin,
                    frame: GridFrame) -> TriMesh:
    """Zero level set of the GP posterior mean, sampled over ``frame``."""
    model = gpis_model(depth, tactile, cfg, camera_origin)
    field = gpis_field(model, frame, cfg.n)
    # Inside is negative; the isosurfacer treats larger values as inside.
    return marching_cubes(ScalarGrid(field.frame, -field.values), 0.0)


def cnn_field(params: dict, depth: VoxelGrid, tactile: VoxelGrid, mode: str) -> ScalarGrid:
    return forward(params, select_input(depth, tactile, mode))


def cnn_completion(params: dict, depth: VoxelGrid, tactile: VoxelGrid, mode: str,
                   iterations: int = SMOOTH_ITERATIONS, lam: float = SMOOTH_LAMBDA,
                   threshold: float = 0.5) -> TriMesh:
    """Mesh the network's probability field at ``threshold``, then smooth."""
    if not 0 < threshold < 1:
        raise InvalidInputError("threshold must lie in (0, 1)")
    mesh = marching_cubes(cnn_field(params, depth, tactile, mode), threshold)
    return laplacian_smooth(mesh, iterations, lam)
