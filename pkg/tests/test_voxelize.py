import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from vtg.grid import GridFrame
from vtg.mesh import TriMesh, box, icosphere
from vtg.voxelize import voxelize_mesh

FRAME = GridFrame((30, 30, 30), 0.01)


class TestVoxelizeMesh:
    def test_aligned_cube(self):
        g = voxelize_mesh(box((0.1, 0.1, 0.1), (0.2, 0.2, 0.2)), FRAME)
        idx = g.indices()
        assert g.count == 1000
        assert idx.min() == 10 and idx.max() == 19

    def test_offset_cube_touches_partial_cells(self):
        g = voxelize_mesh(box((0.105, 0.105, 0.105), (0.195, 0.195, 0.195)), FRAME)
        assert g.count == 1000

    def test_empty_mesh(self):
        g = voxelize_mesh(TriMesh.empty(), FRAME)
        assert g.count == 0

    def test_open_mesh_warns(self):
        m = box((0.105, 0.105, 0.105), (0.195, 0.195, 0.195))
        with pytest.warns(RuntimeWarning):
            g = voxelize_mesh(TriMesh(m.vertices, m.faces[:-2]), FRAME)
        assert g.diagnostics["surface_only"]
        assert 0 < g.count < 1000

    def test_sphere_volume(self):
        frame = GridFrame.cube((0, 0, 0), 0.25, 50)
        g = voxelize_mesh(icosphere(4, radius=0.1), frame)
        vol = g.count * frame.voxel_size ** 3
        # Conservative occupancy overestimates by roughly one shell of voxels.
        assert 4 / 3 * np.pi * 0.1 ** 3 < vol < 4 / 3 * np.pi * 0.105 ** 3 * 1.05

    def test_thin_wall_not_lost(self):
        g = voxelize_mesh(box((0.1, 0.1, 0.1), (0.2, 0.2, 0.1005)), FRAME)
        assert g.count == 100

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.02, 0.2), st.floats(0.02, 0.2), st.floats(0.02, 0.2),
           st.floats(0.005, 0.07), st.floats(0.005, 0.07), st.floats(0.005, 0.07))
    def test_box_matches_cell_overlap(self, x, y, z, dx, dy, dz):
        lo = np.array([x, y, z])
        hi = lo + [dx, dy, dz]
        for c in np.concatenate([lo, hi]) / 0.01:
            assume(abs(c - round(c)) > 1e-6)
        g = voxelize_mesh(box(lo, hi), FRAME)
        a = np.arange(30)
        occ = [(a * 0.01 < h) & ((a + 1) * 0.01 > l) for l, h in zip(lo, hi)]
        expect = occ[0][:, None, None] & occ[1][None, :, None] & occ[2][None, None, :]
        assert np.array_equal(g.occupancy, expect)

    def test_fine_grid_refines_coarse(self):
        """Every fine occupied cell lies inside an occupied coarse cell."""
        mesh = icosphere(3, radius=0.08, center=(0.15, 0.15, 0.15))
        coarse = voxelize_mesh(mesh, GridFrame((15, 15, 15), 0.02))
        fine = voxelize_mesh(mesh, FRAME)
        parent = fine.indices() // 2
        assert np.all(coarse.occupancy[tuple(parent.T)])

    def test_no_warning_for_closed_mesh(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            voxelize_mesh(icosphere(2, 0.05, (0.15, 0.15, 0.15)), FRAME)
