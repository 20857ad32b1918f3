"""Pinhole depth rendering by ray casting against a triangle mesh."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..grid import InvalidInputError, PointCloud
from ..mesh import TriMesh, ray_triangle_hits


class DegenerateViewError(ValueError):
    """The camera sits inside the solid it is asked to render."""


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-from-world transform for a camera at ``eye`` looking at ``target``.

    Camera axes follow the usual vision convention: +z forward, +x right, +y down.
    """
    eye = np.asarray(eye, dtype=float)
    fwd = np.asarray(target, dtype=float) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=float))
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(fwd, [1.0, 0.0, 0.0])
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])
    pose = np.eye(4)
    pose[:3, :3] = rot
    pose[:3, 3] = -rot @ eye
    return pose


@dataclass(frozen=True)
class CameraModel:
    pose: np.ndarray = field(default_factory=lambda: np.eye(4))
    width: int = 160
    height: int = 120
    fx: float = 120.0
    fy: float = 120.0
    cx: float | None = None
    cy: float | None = None
    z_near: float = 0.2
    z_far: float = 2.0

    def __post_init__(self):
        pose = np.asarray(self.pose, dtype=float)
        if pose.shape != (4, 4):
            raise InvalidInputError("camera pose must be 4x4")
        object.__setattr__(self, "pose", pose)
        if self.cx is None:
            object.__setattr__(self, "cx", self.width / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", self.height / 2.0)
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError("focal lengths must be positive")
        if not (0 < self.z_near < self.z_far):
            raise InvalidInputError("need 0 < z_near < z_far")
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError("image size must be positive")

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        rot, trans = self.pose[:3, :3], self.pose[:3, 3]
        return -rot.T @ trans

    def with_pose(self, pose) -> "CameraModel":
        return CameraModel(pose, self.width, self.height, self.fx, self.fy, self.cx, self.cy,
                           self.z_near, self.z_far)

    def pixel_rays(self) -> np.ndarray:
        """Camera-frame ray directions with unit z, one per pixel, row-major."""
        u, v = np.meshgrid(np.arange(self.width) + 0.5, np.arange(self.height) + 0.5)
        d = np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)
        return d.reshape(-1, 3)

    def to_dict(self) -> dict:
        return {"pose": self.pose.tolist(), "width": self.width, "height": self.height,
                "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "z_near": self.z_near, "z_far": self.z_far}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return cls(np.asarray(d["pose"]), d["width"], d["height"], d["fx"], d["fy"], d["cx"], d["cy"],
                   d["z_near"], d["z_far"])


def render_depth(mesh: TriMesh, cam: CameraModel, chunk: int = 1_000_000) -> PointCloud:
    """World-frame points of the nearest surface hit along every pixel ray.

    Hits are kept when their camera depth lies in ``[z_near, z_far]``; pixels
    without a hit contribute nothing.
    """
    if mesh.is_empty:
        return PointCloud.empty()
    if mesh.is_watertight() and mesh.contains(cam.center[None])[0]:
        raise DegenerateViewError("camera centre lies inside the mesh")
    local = mesh.transformed(cam.pose)
    tri = local.triangles()
    rays = cam.pixel_rays()
    depth = np.full(len(rays), np.inf)

    # Project triangles in front of the camera to bound the pixels they can cover.
    z = tri[:, :, 2]
    front = np.all(z > 1e-9, axis=1)
    lo = np.zeros((len(tri), 2), dtype=np.int64)
    hi = np.tile([cam.width - 1, cam.height - 1], (len(tri), 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        px = cam.fx * tri[:, :, 0] / z + cam.cx - 0.5
        py = cam.fy * tri[:, :, 1] / z + cam.cy - 0.5
    lo[front, 0] = np.floor(px[front].min(axis=1)).astype(np.int64)
    lo[front, 1] = np.floor(py[front].min(axis=1)).astype(np.int64)
    hi[front, 0] = np.ceil(px[front].max(axis=1)).astype(np.int64)
    hi[front, 1] = np.ceil(py[front].max(axis=1)).astype(np.int64)
    behind = np.all(z <= cam.z_near, axis=1)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, [cam.width - 1, cam.height - 1])
    keep = np.all(hi >= lo, axis=1) & ~behind
    tri, lo, hi = tri[keep], lo[keep], hi[keep]
    if not len(tri):
        return PointCloud.empty()

    span = hi - lo + 1
    counts = span.prod(axis=1)
    ends = np.cumsum(counts)
    start = 0
    while start < len(tri):
        stop = max(start + 1, int(np.searchsorted(ends, ends[start] - counts[start] + chunk, side="right")))
        c = counts[start:stop]
        item = np.repeat(np.arange(start, stop), c)
        local_idx = np.arange(c.sum()) - np.repeat(np.cumsum(c) - c, c)
        u = lo[item, 0] + local_idx % span[item, 0]
        v = lo[item, 1] + local_idx // span[item, 0]
        pix = v * cam.width + u
        t = _pair_hits(rays[pix], tri[item])
        ok = (t >= cam.z_near) & np.isfinite(t)
        np.minimum.at(depth, pix[ok], t[ok])
        start = stop

    hit = np.isfinite(depth) & (depth <= cam.z_far)
    pts_cam = rays[hit] * depth[hit, None]
    rot, trans = cam.pose[:3, :3], cam.pose[:3, 3]
    return PointCloud((pts_cam - trans) @ rot)


def _pair_hits(d: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Ray parameter for rays from the origin along ``d`` against paired triangles."""
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-18
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = -v0
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = np.einsum("ij,ij->i", d, qvec) * inv
    t = np.einsum("ij,ij->i", e2, qvec) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1)
    return np.where(hit, t, np.inf)


__all__ = ["CameraModel", "DegenerateViewError", "look_at", "render_depth", "ray_triangle_hits"]
