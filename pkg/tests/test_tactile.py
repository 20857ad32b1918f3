import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vtg.grid import GridFrame, InvalidInputError, VoxelGrid
from vtg.synth.tactile import TactileSampleConfig, contact_voxels, make_rng, sample_tactile

F3 = GridFrame((3, 3, 3), 1.0)


class TestMakeRng:
    def test_pcg64_stream(self):
        a = make_rng(7, 1).integers(0, 2 ** 32, size=4)
        b = np.random.Generator(np.random.PCG64(np.random.SeedSequence([7, 1]))).integers(0, 2 ** 32, size=4)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        assert make_rng(1, 2).random() != make_rng(2, 1).random()


class TestSampleTactile:
    def test_empty_grid(self):
        assert len(sample_tactile(VoxelGrid.empty(F3), TactileSampleConfig(5))) == 0

    def test_first_hit_from_top(self):
        g = VoxelGrid.from_indices(F3, [[1, 1, 0], [1, 1, 2]])
        hits = contact_voxels(g, TactileSampleConfig(1, columns=((1, 1),)))
        assert hits.tolist() == [[1, 1, 2]]
        pts = sample_tactile(g, TactileSampleConfig(1, columns=((1, 1),))).points
        assert np.allclose(pts, [[1.5, 1.5, 2.5]])

    def test_full_grid_all_columns(self):
        g = VoxelGrid(F3, np.ones(F3.dims, bool))
        cols = tuple((x, y) for x in range(3) for y in range(3))
        hits = contact_voxels(g, TactileSampleConfig(9, columns=cols))
        assert len(hits) == 9
        assert np.all(hits[:, 2] == 2)

    def test_duplicates_removed(self):
        g = VoxelGrid(F3, np.ones(F3.dims, bool))
        hits = contact_voxels(g, TactileSampleConfig(3, columns=((0, 0), (0, 0), (2, 1))))
        assert hits.tolist() == [[0, 0, 2], [2, 1, 2]]

    def test_too_many_probes(self):
        with pytest.raises(InvalidInputError):
            contact_voxels(VoxelGrid.empty(F3), TactileSampleConfig(10))

    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            TactileSampleConfig(0)
        with pytest.raises(InvalidInputError):
            TactileSampleConfig(5, seed=-1)

    def test_seeded(self):
        rng = np.random.default_rng(0)
        f = GridFrame((10, 10, 10), 0.01)
        g = VoxelGrid(f, rng.random(f.dims) < 0.3)
        a = sample_tactile(g, TactileSampleConfig(40, seed=11)).points
        b = sample_tactile(g, TactileSampleConfig(40, seed=11)).points
        c = sample_tactile(g, TactileSampleConfig(40, seed=12)).points
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    @settings(max_examples=80, deadline=None)
    @given(arrays(np.bool_, st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6))),
           st.integers(0, 2 ** 32))
    def test_properties(self, occ, seed):
        f = GridFrame(occ.shape, 1.0)
        g = VoxelGrid(f, occ)
        npts = int(make_rng(seed).integers(1, occ.shape[0] * occ.shape[1] + 1))
        hits = contact_voxels(g, TactileSampleConfig(npts, seed))
        assert len(hits) <= npts
        assert len({tuple(h) for h in hits}) == len(hits)
        for x, y, z in hits:
            assert occ[x, y, z]
            assert not occ[x, y, z + 1:].any()
