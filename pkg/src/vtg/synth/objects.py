"""Procedural household-like solids for the desk benchmark.

Each family is a signed distance function (negative inside) built from a
few primitives with randomized dimensions. Meshes are extracted with
marching cubes, so they are closed by construction. Objects stand upright
(+z up) with their bounding box centred on the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grid import GridFrame, InvalidInputError, ScalarGrid
from ..mesh import TriMesh
from ..meshing import marching_cubes
from .tactile import make_rng


# --- distance primitives ----------------------------------------------------------

def _box(p, center, half):
    q = np.abs(p - np.asarray(center)) - np.asarray(half)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    return outside + np.minimum(q.max(axis=-1), 0.0)


def _cylinder(p, center, radius, half_height):
    """Capped cylinder along z."""
    q = p - np.asarray(center)
    d = np.stack([np.hypot(q[..., 0], q[..., 1]) - radius, np.abs(q[..., 2]) - half_height], axis=-1)
    return np.linalg.norm(np.maximum(d, 0.0), axis=-1) + np.minimum(d.max(axis=-1), 0.0)


def _sphere(p, center, radius):
    return np.linalg.norm(p - np.asarray(center), axis=-1) - radius


def _capsule(p, a, b, radius):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[..., None] * ab), axis=-1) - radius


def _torus_xz(p, center, major, minor):
    """Torus lying in the xz plane (axis along y)."""
    q = p - np.asarray(center)
    ring = np.hypot(q[..., 0], q[..., 2]) - major
    return np.hypot(ring, q[..., 1]) - minor


# --- families --------------------------------------------------------------------

def _mug(rng):
    r = rng.uniform(0.028, 0.042)
    h = rng.uniform(0.07, 0.10)
    wall = rng.uniform(0.006, 0.009)
    major = rng.uniform(0.018, 0.026)
    minor = rng.uniform(0.005, 0.007)

    def sdf(p):
        body = _cylinder(p, (0, 0, 0), r, h / 2)
        cavity = _cylinder(p, (0, 0, wall + h / 2), r - wall, h / 2)
        cup = np.maximum(body, -cavity)
        handle = np.maximum(_torus_xz(p, (r, 0, 0), major, minor), r - wall - p[..., 0])
        return np.minimum(cup, handle)
    return sdf


def _bowl(rng):
    radius = rng.uniform(0.045, 0.065)
    wall = rng.uniform(0.006, 0.01)
    rim = rng.uniform(0.2, 0.45) * radius

    def sdf(p):
        c = (0, 0, rim)
        shell = np.maximum(_sphere(p, c, radius), -_sphere(p, c, radius - wall))
        return np.maximum(shell, p[..., 2] - rim)
    return sdf


def _bracket(rng):
    a = rng.uniform(0.06, 0.1)
    b = rng.uniform(0.05, 0.09)
    w = rng.uniform(0.03, 0.05)
    t = rng.uniform(0.012, 0.02)

    def sdf(p):
        base = _box(p, (0, 0, t / 2), (a / 2, w / 2, t / 2))
        upright = _box(p, (-a / 2 + t / 2, 0, b / 2), (t / 2, w / 2, b / 2))
        return np.minimum(base, upright)
    return sdf


def _channel(rng):
    length = rng.uniform(0.08, 0.12)
    width = rng.uniform(0.05, 0.08)
    height = rng.uniform(0.04, 0.07)
    t = rng.uniform(0.01, 0.016)

    def sdf(p):
        outer = _box(p, (0, 0, 0), (length / 2, width / 2, height / 2))
        slot = _box(p, (0, 0, t), (length, width / 2 - t, height / 2))
        return np.maximum(outer, -slot)
    return sdf


def _banana(rng):
    bend = rng.uniform(0.05, 0.08)
    sweep = rng.uniform(1.2, 1.9)
    thick = rng.uniform(0.012, 0.018)
    angles = np.linspace(-sweep / 2, sweep / 2, 7)
    pts = np.stack([bend * np.sin(angles), np.zeros_like(angles), bend * (1 - np.cos(angles))], axis=1)
    radii = thick * (0.6 + 0.4 * np.cos(angles / sweep * np.pi))

    def sdf(p):
        d = np.full(p.shape[:-1], np.inf)
        for i in range(len(pts) - 1):
            d = np.minimum(d, _capsule(p, pts[i], pts[i + 1], max(radii[i], radii[i + 1])))
        return d
    return sdf


def _dumbbell(rng):
    gap = rng.uniform(0.04, 0.07)
    ball = rng.uniform(0.018, 0.028)
    bar = rng.uniform(0.006, 0.01)

    def sdf(p):
        ends = np.minimum(_sphere(p, (-gap, 0, 0), ball), _sphere(p, (gap, 0, 0), ball))
        return np.minimum(ends, _capsule(p, (-gap, 0, 0), (gap, 0, 0), bar))
    return sdf


def _tee(rng):
    top = rng.uniform(0.08, 0.12)
    stem = rng.uniform(0.06, 0.09)
    w = rng.uniform(0.025, 0.04)
    t = rng.uniform(0.014, 0.02)

    def sdf(p):
        bar = _box(p, (0, 0, stem + t / 2), (top / 2, w / 2, t / 2))
        post = _box(p, (0, 0, stem / 2), (t / 2, w / 2, stem / 2))
        return np.minimum(bar, post)
    return sdf


def _bottle(rng):
    r = rng.uniform(0.025, 0.038)
    h = rng.uniform(0.08, 0.12)
    neck_r = rng.uniform(0.35, 0.5) * r
    neck_h = rng.uniform(0.025, 0.04)

    def sdf(p):
        body = _cylinder(p, (0, 0, h / 2), r, h / 2)
        shoulder = _sphere(p, (0, 0, h), r)
        neck = _cylinder(p, (0, 0, h + neck_h), neck_r, neck_h)
        return np.minimum(np.minimum(body, np.maximum(shoulder, h - p[..., 2])), neck)
    return sdf


FAMILIES = {
    "mug": _mug,
    "bowl": _bowl,
    "bracket": _bracket,
    "channel": _channel,
    "banana": _banana,
    "dumbbell": _dumbbell,
    "tee": _tee,
    "bottle": _bottle,
}


@dataclass(frozen=True)
class ObjectSpec:
    family: str
    seed: int = 0
    resolution: int = 64

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown object family {self.family!r}; expected one of {sorted(FAMILIES)}")
        if self.resolution < 8:
            raise InvalidInputError("resolution must be >= 8")


def _bounds(sdf, half: float = 0.15, n: int = 48):
    """Tight bounding box of ``sdf < 0`` found on a coarse probe lattice."""
    axis = (np.arange(n) + 0.5) / n * 2 * half - half
    p = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
    inside = sdf(p) < 0
    if not inside.any():
        raise InvalidInputError("object has no interior")
    step = 2 * half / n
    idx = np.argwhere(inside)
    return axis[idx.min(axis=0)] - step, axis[idx.max(axis=0)] + step


def gen_object(spec: ObjectSpec) -> TriMesh:
    """Closed mesh of one randomized object, bounding box centred on the origin."""
    sdf = FAMILIES[spec.family](make_rng(spec.seed, 0x0B7))
    lo, hi = _bounds(sdf)
    edge = float(np.max(hi - lo))
    frame = GridFrame.cube((lo + hi) / 2, edge, spec.resolution)
    values = -sdf(frame.centers())
    mesh = marching_cubes(ScalarGrid(frame, values), 0.0)
    if mesh.is_empty:
        raise InvalidInputError(f"{spec.family} produced an empty surface")
    blo, bhi = mesh.bounds()
    return mesh.translated(-(blo + bhi) / 2)
