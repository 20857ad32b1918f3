"""(depth, tactile, ground truth) grid triplets."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..grid import AlignmentError, GridFrame, PointCloud, VoxelGrid, voxelize_points
from ..mesh import TriMesh
from ..voxelize import voxelize_mesh
from .render import CameraModel, render_depth
from .shapes import BASIC_PRIMITIVES, ShapePairSpec, gen_shape_pair, shape_pair_frame
from .tactile import TactileSampleConfig, make_rng, sample_tactile

SPLIT_TAGS = ("train_view", "holdout_view", "holdout_mesh")
OBJECT_DISTANCE = 0.8


@dataclass(frozen=True, eq=False)
class ObservationTriplet:
    depth: VoxelGrid
    tactile: VoxelGrid
    ground_truth: VoxelGrid
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.depth.frame == self.tactile.frame == self.ground_truth.frame):
            raise AlignmentError("triplet grids must share one frame")

    @property
    def frame(self) -> GridFrame:
        return self.ground_truth.frame


@dataclass(frozen=True, eq=False)
class Observation:
    """A triplet together with the clouds it was built from (baselines need them)."""

    triplet: ObservationTriplet
    depth_cloud: PointCloud
    tactile_cloud: PointCloud
    mesh: TriMesh


def observe(mesh: TriMesh, cam: CameraModel, cfg: TactileSampleConfig, frame: GridFrame,
            meta: dict | None = None) -> Observation:
    """Render, voxelize and probe ``mesh``; everything is in the camera frame.

    ``mesh`` and ``frame`` are given in world coordinates; the mesh is moved
    into the camera frame, where the grid's z axis is the viewing axis.
    """
    local = mesh.transformed(cam.pose)
    local_cam = cam.with_pose(np.eye(4))
    depth_cloud = render_depth(local, local_cam)
    gt = voxelize_mesh(local, frame)
    tactile_cloud = sample_tactile(gt, cfg)
    depth = voxelize_points(depth_cloud, frame)
    tactile = voxelize_points(tactile_cloud, frame)
    info = {"seed": cfg.seed, "npts": cfg.npts, "depth_points": len(depth_cloud),
            "depth_dropped": depth.diagnostics.get("dropped", 0)}
    info.update(meta or {})
    triplet = ObservationTriplet(depth, tactile, gt, info)
    return Observation(triplet, depth_cloud, tactile_cloud, local)


def make_triplet(mesh: TriMesh, cam: CameraModel, cfg: TactileSampleConfig, frame: GridFrame,
                 meta: dict | None = None) -> ObservationTriplet:
    """Depth, tactile and ground-truth grids for one view of ``mesh``.

    ``frame`` lives in the camera frame (z = viewing axis).
    """
    return observe(mesh, cam, cfg, frame, meta).triplet


def view_poses(n_azimuth: int = 8, elevations=(15.0, 40.0), distance: float = OBJECT_DISTANCE):
    """Object-to-camera rigid transforms for an azimuth x elevation lattice.

    Each pose rotates the object about its own centre and places it
    ``distance`` metres down the optical axis of a camera at the origin.
    """
    poses = []
    for el, k in itertools.product(elevations, range(n_azimuth)):
        az = 2 * np.pi * k / n_azimuth
        e = np.radians(el)
        rz = np.array([[np.cos(az), -np.sin(az), 0], [np.sin(az), np.cos(az), 0], [0, 0, 1]])
        rx = np.array([[1, 0, 0], [0, np.cos(e), -np.sin(e)], [0, np.sin(e), np.cos(e)]])
        pose = np.eye(4)
        pose[:3, :3] = rx @ rz
        pose[:3, 3] = [0.0, 0.0, distance]
        poses.append(pose)
    return poses


def shape_pair_observation(spec: ShapePairSpec, dim: int, npts: int = 40, tactile_seed: int = 0,
                           cam: CameraModel | None = None) -> Observation:
    """Front-facing view of a two-part shape, frame centred on the junction plane."""
    cam = cam or CameraModel()
    mesh = gen_shape_pair(spec).translated([0.0, 0.0, OBJECT_DISTANCE])
    frame = shape_pair_frame(spec, dim, center=(0.0, 0.0, OBJECT_DISTANCE)).as_float32()
    meta = {"front": spec.front, "back": spec.back, "shape_seed": spec.seed}
    return observe(mesh, cam, TactileSampleConfig(npts, tactile_seed), frame, meta)


def shape_pair_dataset(count: int, dim: int = 20, seed: int = 0, npts: int = 40,
                       primitives=BASIC_PRIMITIVES, distinct: bool = True) -> list[ObservationTriplet]:
    """``count`` random two-part shapes with tactile probes on the occluded back."""
    pairs = [(a, b) for a in primitives for b in primitives if a != b or not distinct]
    rng = make_rng(seed, 0x7A1)
    out = []
    for i in range(count):
        front, back = pairs[int(rng.integers(len(pairs)))]
        shape_seed = int(rng.integers(2 ** 63))
        obs = shape_pair_observation(ShapePairSpec(front, back, seed=shape_seed), dim, npts,
                                     tactile_seed=int(rng.integers(2 ** 63)))
        obs.triplet.meta["index"] = i
        out.append(obs.triplet)
    return out
