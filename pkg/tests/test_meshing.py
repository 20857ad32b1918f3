import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays

from vtg.grid import GridFrame, InvalidInputError, ScalarGrid, VoxelGrid, jaccard
from vtg.mesh import TriMesh, box, icosphere
from vtg.meshing import (hausdorff, laplacian_smooth, marching_cubes, mesh_to_eval_grid, occupancy_mesh,
                         point_mesh_distance)


def rotation(axis, angle):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    m = np.eye(4)
    m[:3, :3] = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * k @ k
    return m


class TestMarchingCubes:
    def test_empty_field(self):
        f = GridFrame((4, 4, 4), 1.0)
        assert marching_cubes(ScalarGrid(f, np.zeros(f.dims)), 0.5).is_empty

    def test_single_voxel_octahedron(self):
        f = GridFrame((3, 3, 3), 1.0)
        m = occupancy_mesh(VoxelGrid.from_indices(f, [[1, 1, 1]]))
        assert len(m.vertices) == 6 and len(m.faces) == 8
        assert m.is_watertight()
        assert m.euler_characteristic() == 2
        assert np.allclose(m.vertices.mean(axis=0), [1.5, 1.5, 1.5])
        # Octahedron with half-diagonal 0.5 has volume 4/3 * 0.5^3.
        assert m.volume() == pytest.approx(4 / 3 * 0.125)

    def test_border_voxel_is_capped(self):
        f = GridFrame((2, 2, 2), 1.0)
        m = occupancy_mesh(VoxelGrid(f, np.ones(f.dims, bool)))
        assert m.is_watertight() and m.volume() > 0

    def test_sphere_area(self):
        f = GridFrame.cube((0, 0, 0), 2.0, 64)
        c = f.centers()
        vals = 0.8 - np.linalg.norm(c, axis=-1)
        m = marching_cubes(ScalarGrid(f, vals), 0.0)
        assert m.is_watertight() and m.euler_characteristic() == 2
        assert m.area() == pytest.approx(4 * np.pi * 0.64, rel=0.1)
        assert m.volume() == pytest.approx(4 / 3 * np.pi * 0.512, rel=0.02)

    def test_sphere_vertices_within_half_voxel(self):
        f = GridFrame.cube((0.1, 0, 0), 0.3, 64)
        vals = 0.1 - np.linalg.norm(f.centers() - [0.1, 0, 0], axis=-1)
        m = marching_cubes(ScalarGrid(f, vals), 0.0)
        r = np.linalg.norm(m.vertices - [0.1, 0, 0], axis=1)
        assert np.all(np.abs(r - 0.1) <= f.voxel_size / 2)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.bool_, (5, 4, 4)))
    def test_random_grids_are_closed(self, occ):
        m = occupancy_mesh(VoxelGrid(GridFrame(occ.shape, 1.0), occ))
        if not occ.any():
            assert m.is_empty
        else:
            assert m.is_watertight()
            assert m.volume() > 0


class TestEvalGrid:
    def test_cube_matches_analytic_occupancy(self):
        lo, hi = np.array([0.031, 0.027, 0.044]), np.array([0.141, 0.133, 0.129])
        frame = GridFrame.cube((0.09, 0.09, 0.09), 0.18, 80)
        grid = mesh_to_eval_grid(box(lo, hi), frame)
        a = np.arange(80) * frame.voxel_size
        cell = [(a < h) & (a + frame.voxel_size > l) for l, h in zip(lo, hi)]
        analytic = cell[0][:, None, None] & cell[1][None, :, None] & cell[2][None, None, :]
        assert np.mean(grid.occupancy == analytic) >= 0.99

    def test_self_jaccard_and_hull(self):
        frame = GridFrame.cube((0, 0, 0), 0.2, 40)
        l_shape = TriMesh(*_l_shape())
        g = mesh_to_eval_grid(l_shape, frame)
        assert jaccard(g, g) == 1.0
        from vtg.baselines import convex_hull
        hull = mesh_to_eval_grid(convex_hull(l_shape.vertices), frame)
        assert jaccard(g, hull) < 1.0


def _l_shape():
    from vtg.mesh import box as _box
    a = _box((-0.08, -0.05, -0.08), (0.08, 0.05, -0.04))
    b = _box((-0.08, -0.05, -0.04), (-0.04, 0.05, 0.08))
    grid = GridFrame.cube((0, 0, 0), 0.2, 100)
    occ = mesh_to_eval_grid(a, grid).occupancy | mesh_to_eval_grid(b, grid).occupancy
    m = occupancy_mesh(VoxelGrid(grid, occ))
    return m.vertices, m.faces


class TestSmoothing:
    def test_planar_interior_fixed(self):
        xs, ys = np.meshgrid(np.arange(3.0), np.arange(3.0), indexing="ij")
        v = np.stack([xs.ravel(), ys.ravel(), np.zeros(9)], 1)
        f = []
        for i in range(2):
            for j in range(2):
                a, b, c, d = 3 * i + j, 3 * (i + 1) + j, 3 * i + j + 1, 3 * (i + 1) + j + 1
                f += [[a, b, d], [a, d, c]]
        s = laplacian_smooth(TriMesh(v, f), 3, 0.5)
        assert np.allclose(s.vertices[4], [1, 1, 0])

    def test_triangle_example(self):
        m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        s = laplacian_smooth(m, iterations=1, lam=0.5)
        assert np.allclose(s.vertices[0], [0.25, 0.25, 0.0])
        assert np.allclose(s.vertices.mean(axis=0), m.vertices.mean(axis=0))

    def test_zero_iterations_is_identity(self):
        m = icosphere(1)
        assert laplacian_smooth(m, 0) == m

    def test_lambda_range(self):
        with pytest.raises(InvalidInputError):
            laplacian_smooth(icosphere(1), 1, 0.0)
        with pytest.raises(InvalidInputError):
            laplacian_smooth(icosphere(1), 1, 1.5)

    def test_shrinks_sphere_keeps_topology(self):
        m = icosphere(2)
        s = laplacian_smooth(m, 3, 0.5)
        assert s.faces is m.faces or np.array_equal(s.faces, m.faces)
        assert 0 < s.volume() < m.volume()


class TestDistances:
    def test_point_to_box(self):
        pts = np.array([[0.5, 0.5, 0.5], [2.0, 0.5, 0.5], [2.0, 2.0, 0.5], [2.0, 2.0, 2.0]])
        d = point_mesh_distance(pts, box())
        assert np.allclose(d, [0.5, 1.0, np.sqrt(2), np.sqrt(3)])

    def test_identical_meshes(self):
        m = icosphere(2, 0.05)
        h = hausdorff(m, m)
        assert h.symmetric_mean <= 1e-9 and h.max_a_to_b <= 1e-9

    def test_concentric_spheres_mm(self):
        a, b = icosphere(4, 0.05), icosphere(4, 0.06)
        h = hausdorff(a, b, samples=2000)
        assert h.symmetric_mean == pytest.approx(10.0, rel=0.02)

    def test_symmetric(self):
        a, b = icosphere(2, 0.05), box((-0.03,) * 3, (0.04,) * 3)
        assert hausdorff(a, b).symmetric_mean == hausdorff(b, a).symmetric_mean

    def test_scaling(self):
        a, b = icosphere(2, 0.05), box((-0.03,) * 3, (0.04,) * 3)
        h1 = hausdorff(a, b, samples=500).symmetric_mean
        h3 = hausdorff(a.scaled(3.0), b.scaled(3.0), samples=500).symmetric_mean
        assert h3 == pytest.approx(3 * h1, rel=1e-9)

    def test_rigid_invariance(self):
        a, b = icosphere(2, 0.05), box((-0.03,) * 3, (0.04,) * 3)
        t = rotation((1, 2, 3), 0.7)
        t[:3, 3] = [0.2, -0.1, 0.5]
        h1 = hausdorff(a, b, samples=500).symmetric_mean
        h2 = hausdorff(a.transformed(t), b.transformed(t), samples=500).symmetric_mean
        assert h2 == pytest.approx(h1, rel=1e-9)

    def test_empty_mesh_rejected(self):
        with pytest.raises(InvalidInputError):
            hausdorff(TriMesh.empty(), box())
