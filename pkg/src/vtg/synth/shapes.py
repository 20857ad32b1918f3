"""Two-part procedural solids: a front half glued to a different back half.

Each half is a height field over a shared rectangular cross-section in the
z = 0 plane. The front half bulges toward the camera (-z), the back half away
from it (+z), so the camera sees only the front primitive.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..grid import GridFrame, InvalidInputError
from ..mesh import TriMesh
from .tactile import make_rng


class ShapeGenerationError(InvalidInputError):
    pass


def _box(u, v):
    return np.ones_like(u)


def _cylinder(u, v):
    return np.sqrt(np.clip(1.0 - u * u, 0.0, None))


def _sphere(u, v):
    # Ellipsoid cap through the rectangle corners.
    return np.sqrt(np.clip(1.0 - (u * u + v * v) / 2.0, 0.0, None))


def _wedge(u, v):
    return (1.0 - v) / 2.0


def _groove(u, v):
    return 1.0 - 0.6 * np.exp(-(u / 0.35) ** 2)


def _step(u, v):
    return np.where(u < 0.0, 0.45, 1.0)


PROFILES = {
    "box": _box,
    "cylinder": _cylinder,
    "sphere": _sphere,
    "wedge": _wedge,
    "groove": _groove,
    "step": _step,
}
BASIC_PRIMITIVES = ("box", "cylinder", "sphere", "wedge")


@dataclass(frozen=True)
class ShapePairSpec:
    """Front/back primitive pair. Unset scales are drawn from ``seed``.

    Scales are in metres: half extents of the shared cross-section and the
    depth of each half along the viewing axis.
    """

    front: str
    back: str
    half_width: float | None = None
    half_height: float | None = None
    front_depth: float | None = None
    back_depth: float | None = None
    seed: int = 0
    resolution: int = 25

    def resolved(self) -> "ShapePairSpec":
        for name in (self.front, self.back):
            if name not in PROFILES:
                raise ShapeGenerationError(f"unknown primitive {name!r}")
        rng = make_rng(self.seed, 0x5A4E)
        draw = rng.uniform(0.03, 0.07, size=4)
        spec = replace(
            self,
            half_width=self.half_width if self.half_width is not None else float(draw[0]),
            half_height=self.half_height if self.half_height is not None else float(draw[1]),
            front_depth=self.front_depth if self.front_depth is not None else float(draw[2]),
            back_depth=self.back_depth if self.back_depth is not None else float(draw[3]),
        )
        if min(spec.half_width, spec.half_height, spec.front_depth, spec.back_depth) <= 0:
            raise ShapeGenerationError("primitive scales must be positive")
        if spec.resolution < 3:
            raise ShapeGenerationError("resolution must be at least 3")
        return spec

    @property
    def max_extent(self) -> float:
        s = self.resolved()
        return 2.0 * max(s.half_width, s.half_height, s.front_depth, s.back_depth)


def gen_shape_pair(spec: ShapePairSpec) -> TriMesh:
    """Watertight mesh of the front primitive joined to the back primitive at z = 0."""
    s = spec.resolved()
    n = s.resolution
    lin = np.linspace(-1.0, 1.0, n)
    u, v = np.meshgrid(lin, lin, indexing="ij")
    hf = PROFILES[s.front](u, v) * s.front_depth
    hb = PROFILES[s.back](u, v) * s.back_depth
    x, y = u * s.half_width, v * s.half_height
    front = np.stack([x, y, -hf], axis=-1).reshape(-1, 3)
    back = np.stack([x, y, hb], axis=-1).reshape(-1, 3)
    verts = np.vstack([front, back])
    nb = n * n

    idx = np.arange(nb).reshape(n, n)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    back_faces = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)]) + nb
    front_faces = np.concatenate([np.stack([a, c, b], 1), np.stack([a, d, c], 1)])

    ring = np.concatenate([idx[:, 0], idx[-1, 1:], idx[-2::-1, -1], idx[0, -2:0:-1]])
    p, q = ring, np.roll(ring, -1)
    walls = np.concatenate([np.stack([p, q, q + nb], 1), np.stack([p, q + nb, p + nb], 1)])

    mesh = TriMesh(verts, np.concatenate([front_faces, back_faces, walls])).cleaned()
    if not mesh.is_watertight():
        raise ShapeGenerationError(f"{s.front}/{s.back} pair did not close into a watertight solid")
    return mesh


def shape_pair_frame(spec: ShapePairSpec, dim: int, padding: float = 1.1, center=(0.0, 0.0, 0.0)) -> GridFrame:
    """Cubic frame centred on the junction plane so each half fills one side of the grid."""
    return GridFrame.cube(center, padding * spec.max_extent, dim)
