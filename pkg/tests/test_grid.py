import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vtg.grid import (AlignmentError, GridFrame, InvalidInputError, PointCloud, ScalarGrid, VoxelGrid,
                      jaccard, merge_grids, read_vtf, read_vtg, voxelize_points, vtf_bytes, vtf_from_bytes,
                      vtg_bytes, vtg_from_bytes, write_vtf, write_vtg)

FRAME = GridFrame((10, 10, 10), 0.01)


def occ_grids(shape=(4, 3, 5)):
    return arrays(np.bool_, shape).map(lambda a: VoxelGrid(GridFrame(shape, 0.5), a))


class TestGridFrame:
    def test_rejects_bad_geometry(self):
        with pytest.raises(InvalidInputError):
            GridFrame((0, 1, 1), 0.1)
        with pytest.raises(InvalidInputError):
            GridFrame((1, 1, 1), 0.0)
        with pytest.raises(InvalidInputError):
            GridFrame((1, 1, 1), 0.1, (0.0, float("nan"), 0.0))

    def test_cube_is_centred(self):
        f = GridFrame.cube((1.0, 2.0, 3.0), 2.0, 4)
        assert f.voxel_size == 0.5
        assert f.origin == (0.0, 1.0, 2.0)
        assert np.allclose(f.centers().reshape(-1, 3).mean(axis=0), [1.0, 2.0, 3.0])

    def test_resampled_keeps_extent(self):
        f = GridFrame.cube((0, 0, 0), 1.0, 20).resampled(80)
        assert f.dims == (80, 80, 80)
        assert np.isclose(f.voxel_size * 80, 1.0)

    def test_float32_round_trip(self):
        f = GridFrame.cube((0.1, 0.2, 0.8), 0.13, 40).as_float32()
        g = VoxelGrid.empty(f)
        assert vtg_from_bytes(vtg_bytes(g)).frame == f


class TestVoxelizePoints:
    def test_origin_point(self):
        g = voxelize_points(PointCloud([[0.0, 0.0, 0.0]]), FRAME)
        assert g.occupancy[0, 0, 0]
        assert g.count == 1

    def test_floor_index(self):
        g = voxelize_points(PointCloud([[0.015, 0.021, 0.005]]), FRAME)
        assert g.indices().tolist() == [[1, 2, 0]]

    def test_out_of_bounds_dropped(self):
        g = voxelize_points(PointCloud([[-0.001, 0.0, 0.0]]), FRAME)
        assert g.count == 0
        assert g.diagnostics["dropped"] == 1

    def test_upper_bound_is_exclusive(self):
        g = voxelize_points(PointCloud([[0.1, 0.05, 0.05]]), FRAME)
        assert g.count == 0 and g.diagnostics["dropped"] == 1

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            voxelize_points(PointCloud([[np.inf, 0, 0]]), FRAME)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(0, 60), st.just(3)),
                  elements=st.floats(-0.02, 0.12, allow_nan=False)))
    def test_count_never_exceeds_points(self, pts):
        g = voxelize_points(PointCloud(pts), FRAME)
        assert g.count + g.diagnostics["dropped"] <= len(pts)


class TestMergeAndJaccard:
    def test_union_example(self):
        a = VoxelGrid.from_indices(FRAME, [[1, 1, 1]])
        b = VoxelGrid.from_indices(FRAME, [[2, 2, 2]])
        assert merge_grids(a, b).indices().tolist() == [[1, 1, 1], [2, 2, 2]]

    def test_identity_and_idempotence(self):
        a = VoxelGrid.from_indices(FRAME, [[1, 2, 3], [4, 5, 6]])
        assert merge_grids(a, a) == a
        assert merge_grids(a, VoxelGrid.empty(FRAME)) == a

    def test_jaccard_examples(self):
        a = VoxelGrid.from_indices(FRAME, [[0, 0, 0]])
        assert jaccard(a, a) == 1.0
        assert jaccard(a, VoxelGrid.from_indices(FRAME, [[1, 0, 0]])) == 0.0
        assert jaccard(VoxelGrid.empty(FRAME), VoxelGrid.empty(FRAME)) == 1.0

    def test_jaccard_four_of_twelve(self):
        occ_a = np.zeros(FRAME.dims, bool)
        occ_b = np.zeros(FRAME.dims, bool)
        occ_a[0:2, 0:2, 0:2] = True
        occ_b[1:3, 0:2, 0:2] = True
        assert jaccard(VoxelGrid(FRAME, occ_a), VoxelGrid(FRAME, occ_b)) == pytest.approx(4 / 12)

    def test_alignment_errors(self):
        a = VoxelGrid.empty(FRAME)
        b = VoxelGrid.empty(GridFrame((10, 10, 10), 0.02))
        with pytest.raises(AlignmentError):
            merge_grids(a, b)
        with pytest.raises(AlignmentError):
            jaccard(a, b)

    @settings(max_examples=60, deadline=None)
    @given(occ_grids(), occ_grids(), occ_grids())
    def test_algebraic_properties(self, a, b, c):
        assert jaccard(a, b) == jaccard(b, a)
        assert 0.0 <= jaccard(a, b) <= 1.0
        assert merge_grids(a, b) == merge_grids(b, a)
        assert merge_grids(merge_grids(a, b), c) == merge_grids(a, merge_grids(b, c))
        m = merge_grids(a, b)
        assert np.all(m.occupancy[a.occupancy])


class TestGridTypes:
    def test_immutable(self):
        g = VoxelGrid.from_indices(FRAME, [[0, 0, 0]])
        with pytest.raises(ValueError):
            g.occupancy[0, 0, 0] = False

    def test_shape_checked(self):
        with pytest.raises(InvalidInputError):
            VoxelGrid(FRAME, np.zeros((3, 3, 3), bool))

    def test_scalar_values_must_be_finite(self):
        vals = np.zeros(FRAME.dims)
        vals[0, 0, 0] = np.nan
        with pytest.raises(InvalidInputError):
            ScalarGrid(FRAME, vals)

    def test_indices_are_x_fastest(self):
        g = VoxelGrid.from_indices(FRAME, [[0, 1, 0], [1, 0, 0], [0, 0, 1]])
        assert g.indices().tolist() == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]

    def test_diagnostics_ignored_by_equality(self):
        a = VoxelGrid(FRAME, np.zeros(FRAME.dims, bool), {"dropped": 3})
        assert a == VoxelGrid.empty(FRAME)


class TestFileFormats:
    def test_vtg_header_and_bit_order(self):
        f = GridFrame((3, 2, 2), 0.25, (1.0, -2.0, 0.5))
        g = VoxelGrid.from_indices(f, [[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 1, 1]])
        buf = vtg_bytes(g)
        assert buf[:4] == b"VTGR"
        assert int.from_bytes(buf[4:8], "little") == 1
        assert len(buf) == 36 + 2
        # x-fastest linear ids 0, 1, 3 and 11 -> LSB-first bits.
        assert buf[36] == 0b00001011
        assert buf[37] == 0b00001000

    def test_vtg_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        f = GridFrame((5, 7, 3), 0.125, (0.5, 0.25, -1.0))
        g = VoxelGrid(f, rng.random(f.dims) < 0.4)
        write_vtg(tmp_path / "g.vtg", g)
        assert read_vtg(tmp_path / "g.vtg") == g

    def test_vtf_round_trip(self, tmp_path):
        f = GridFrame((4, 3, 2), 0.5)
        vals = np.arange(24, dtype=np.float32).reshape(f.dims) / 7
        s = ScalarGrid(f, vals)
        buf = vtf_bytes(s)
        assert int.from_bytes(buf[4:8], "little") == 2
        assert len(buf) == 36 + 4 * 24
        write_vtf(tmp_path / "s.vtf", s)
        assert read_vtf(tmp_path / "s.vtf") == s
        assert vtf_from_bytes(buf) == s

    def test_rejects_wrong_version_and_magic(self):
        g = VoxelGrid.empty(FRAME)
        with pytest.raises(InvalidInputError):
            vtf_from_bytes(vtg_bytes(g))
        with pytest.raises(InvalidInputError):
            vtg_from_bytes(b"XXXX" + vtg_bytes(g)[4:])
        with pytest.raises(InvalidInputError):
            vtg_from_bytes(vtg_bytes(g)[:-1])

    def test_point_cloud_text_round_trip(self, tmp_path):
        pts = np.random.default_rng(0).normal(size=(20, 3))
        PointCloud(pts).save(tmp_path / "p.xyz")
        assert np.array_equal(PointCloud.load(tmp_path / "p.xyz").points, pts)
