"""Simulated guarded-move tactile contacts on a ground-truth voxel grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grid import InvalidInputError, PointCloud, VoxelGrid

DEFAULT_NPTS = 40


def make_rng(*seed) -> np.random.Generator:
    """Portable PCG64 stream; tuples of ints are mixed through SeedSequence."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(seed))))


@dataclass(frozen=True)
class TactileSampleConfig:
    """``npts`` random (x, y) columns probed along -z.

    ``columns`` pins the probed columns instead of drawing them.
    """

    npts: int = DEFAULT_NPTS
    seed: int = 0
    columns: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        if self.npts <= 0:
            raise InvalidInputError("npts must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidInputError("seed must fit in 64 bits")


def contact_voxels(vox_gt: VoxelGrid, cfg: TactileSampleConfig) -> np.ndarray:
    """Voxel indices of first contacts, deduplicated in probe order."""
    nx, ny, nz = vox_gt.frame.dims
    if cfg.npts > nx * ny:
        raise InvalidInputError(f"npts={cfg.npts} exceeds the {nx * ny} columns of the grid")
    if cfg.columns is not None:
        cols = np.asarray(cfg.columns, dtype=np.int64).reshape(-1, 2)
        xs, ys = cols[:, 0], cols[:, 1]
    else:
        rng = make_rng(cfg.seed)
        xs = rng.integers(0, nx - 1, size=cfg.npts, endpoint=True)
        ys = rng.integers(0, ny - 1, size=cfg.npts, endpoint=True)
    occ = vox_gt.occupancy
    hits = []
    seen = set()
    for x, y in zip(xs.tolist(), ys.tolist()):
        column = occ[x, y]
        filled = np.flatnonzero(column)
        if not len(filled):
            continue
        # Scan from the far side (z = nz-1) toward the camera; keep the first hit only.
        z = int(filled[-1])
        if (x, y, z) not in seen:
            seen.add((x, y, z))
            hits.append((x, y, z))
    return np.array(hits, dtype=np.int64).reshape(-1, 3)


def sample_tactile(vox_gt: VoxelGrid, cfg: TactileSampleConfig) -> PointCloud:
    """Contact points (voxel centres) from ``cfg.npts`` guarded moves along -z.

    ``vox_gt`` must already be expressed in the depth camera's grid frame.
    """
    return PointCloud(vox_gt.frame.index_to_point(contact_voxels(vox_gt, cfg)))
