import numpy as np
import pytest

from vtg.grid import AlignmentError, GridFrame, VoxelGrid, jaccard, vtg_bytes
from vtg.mesh import box, icosphere
from vtg.synth.render import CameraModel
from vtg.synth.shapes import ShapePairSpec
from vtg.synth.tactile import TactileSampleConfig
from vtg.synth.triplet import make_triplet, observe, shape_pair_dataset, shape_pair_observation, view_poses

CUBE = box((-0.05, -0.05, 0.75), (0.05, 0.05, 0.85))
FRAME = GridFrame.cube((0, 0, 0.8), 0.11, 20)


class TestMakeTriplet:
    def test_cube(self):
        t = make_triplet(CUBE, CameraModel(), TactileSampleConfig(40, seed=1), FRAME)
        assert t.depth.count > 0 and t.tactile.count > 0
        assert np.all(t.ground_truth.occupancy[t.tactile.occupancy])
        assert jaccard(t.depth, t.ground_truth) < 1.0
        # Only the near face is seen.
        assert t.depth.indices()[:, 2].max() <= 2

    def test_tactile_is_top_of_column(self):
        t = make_triplet(icosphere(3, 0.05, (0, 0, 0.8)), CameraModel(), TactileSampleConfig(40, seed=5), FRAME)
        gt = t.ground_truth.occupancy
        for x, y, z in t.tactile.indices():
            assert gt[x, y, z] and not gt[x, y, z + 1:].any()

    def test_deterministic(self):
        args = (icosphere(2, 0.05, (0, 0, 0.8)), CameraModel(), TactileSampleConfig(40, seed=2), FRAME)
        a, b = make_triplet(*args), make_triplet(*args)
        for g in ("depth", "tactile", "ground_truth"):
            assert vtg_bytes(getattr(a, g)) == vtg_bytes(getattr(b, g))

    def test_behind_far_plane(self):
        mesh = CUBE.translated([0, 0, 2.0])
        frame = GridFrame.cube((0, 0, 2.8), 0.11, 20)
        t = make_triplet(mesh, CameraModel(), TactileSampleConfig(40), frame)
        assert t.depth.count == 0
        assert t.ground_truth.count > 0

    def test_world_pose(self):
        pose = view_poses()[3]
        mesh = icosphere(2, 0.05)
        obs = observe(mesh, CameraModel(pose), TactileSampleConfig(40), FRAME)
        assert obs.mesh.bounds()[0][2] == pytest.approx(0.75, abs=1e-3)
        assert obs.triplet.depth.count > 0

    def test_misaligned_frames_rejected(self):
        from vtg.synth.triplet import ObservationTriplet
        with pytest.raises(AlignmentError):
            ObservationTriplet(VoxelGrid.empty(FRAME), VoxelGrid.empty(FRAME),
                               VoxelGrid.empty(FRAME.resampled(10)))


class TestViewPoses:
    def test_lattice(self):
        poses = view_poses(8, (15.0, 40.0), 0.8)
        assert len(poses) == 16
        for p in poses:
            assert np.allclose(p[:3, :3] @ p[:3, :3].T, np.eye(3))
            assert np.allclose(p[:3, 3], [0, 0, 0.8])


class TestShapePairData:
    def test_observation(self):
        obs = shape_pair_observation(ShapePairSpec("box", "sphere", seed=1), 20)
        t = obs.triplet
        assert t.frame.dims == (20, 20, 20)
        # Tactile probes land on the back half, depth on the front half.
        assert t.tactile.indices()[:, 2].min() >= 10
        assert t.depth.indices()[:, 2].max() < 10

    def test_dataset_deterministic(self):
        a = shape_pair_dataset(3, dim=12, seed=4)
        b = shape_pair_dataset(3, dim=12, seed=4)
        assert all(x.ground_truth == y.ground_truth and x.tactile == y.tactile for x, y in zip(a, b))
        assert all(t.meta["front"] != t.meta["back"] for t in a)
