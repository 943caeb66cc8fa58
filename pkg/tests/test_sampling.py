"""Bilinear sampling and conv3d: node exactness, clamping, adjoints."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from dvt.numerics import Rng, Tensor, bilinear_gather, bilinear_sample, conv3d, grad_check


def rand(shape, seed=0, lo=-1.0, hi=1.0):
    return Rng(seed).uniform(shape, lo, hi, np.float64)


class TestBilinearSample:
    def test_exact_at_integer_coordinates(self):
        g = Tensor(rand((4, 5, 3), seed=1))
        pts = Tensor(np.array([[1.0, 1.0], [0.0, 0.0], [3.0, 4.0]]))
        out = bilinear_sample(g, pts)
        np.testing.assert_array_equal(out.data[0], g.data[1, 1])
        np.testing.assert_array_equal(out.data[1], g.data[0, 0])
        np.testing.assert_array_equal(out.data[2], g.data[3, 4])

    def test_center_of_2x2_cell(self):
        g = Tensor(np.array([[0.0, 1.0], [2.0, 3.0]])[:, :, None])
        out = bilinear_sample(g, Tensor(np.array([[0.5, 0.5]])))
        np.testing.assert_allclose(out.data, [[1.5]])

    def test_out_of_range_clamps(self):
        g = Tensor(rand((4, 5, 2), seed=2))
        inside = bilinear_sample(g, Tensor(np.array([[0.0, 0.4]])))
        clamped = bilinear_sample(g, Tensor(np.array([[-3.2, 0.4]])))
        np.testing.assert_array_equal(clamped.data, inside.data)
        right = bilinear_sample(g, Tensor(np.array([[1.2, 9.7]])))
        edge = bilinear_sample(g, Tensor(np.array([[1.2, 4.0]])))
        np.testing.assert_allclose(right.data, edge.data)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_partition_of_unity(self, seed):
        # value of a constant grid is that constant anywhere: weights sum to 1
        rng = Rng(seed)
        g = Tensor(np.full((6, 7, 1), 3.25))
        pts = Tensor(rng.uniform((20, 2), -2.0, 9.0, np.float64))
        out = bilinear_sample(g, pts)
        np.testing.assert_allclose(out.data, 3.25, atol=1e-12)

    def test_adjoint_wrt_grid_and_coords(self):
        g = Tensor(rand((5, 6, 3), seed=3), requires_grad=True)
        # keep away from integers and borders: the coordinate derivative is
        # piecewise and the checker must not straddle a cell boundary
        pts = Tensor(np.array([[1.3, 2.7], [0.4, 4.1], [3.6, 0.6], [2.2, 2.2]]),
                     requires_grad=True)
        w = Tensor(rand((4, 3), seed=4))
        rep = grad_check(lambda g, p: (bilinear_sample(g, p) * w).sum(), [g, pts])
        assert rep.max_rel_err < 1e-6

    def test_clamped_coordinate_has_zero_gradient(self):
        g = Tensor(rand((4, 4, 1), seed=5))
        pts = Tensor(np.array([[-2.0, 1.5], [5.0, 1.5]]), requires_grad=True)
        out = bilinear_sample(g, pts)
        out.sum().backward()
        assert pts.grad[0, 0] == 0.0 and pts.grad[1, 0] == 0.0
        assert pts.grad[0, 1] != 0.0 or pts.grad[1, 1] != 0.0

    def test_single_row_grid(self):
        g = Tensor(rand((1, 5, 2), seed=6))
        out = bilinear_sample(g, Tensor(np.array([[0.7, 2.0]])))
        np.testing.assert_allclose(out.data[0], g.data[0, 2])


class TestBilinearGather:
    def test_matches_per_grid_sampling(self):
        grids = Tensor(rand((3, 4, 5, 2), seed=7), requires_grad=True)
        pts = Tensor(np.array([[1.2, 3.3], [0.6, 1.9], [2.4, 2.5]]), requires_grad=True)
        idx = np.array([2, 0, 1])
        out = bilinear_gather(grids, idx, pts)
        for i, fi in enumerate(idx):
            single = bilinear_sample(Tensor(grids.data[fi]), Tensor(pts.data[i:i + 1]))
            np.testing.assert_allclose(out.data[i], single.data[0])
        w = Tensor(rand((3, 2), seed=8))
        rep = grad_check(lambda g, p: (bilinear_gather(g, idx, p) * w).sum(), [grids, pts])
        assert rep.max_rel_err < 1e-6


class TestConv3d:
    def test_delta_kernel_identity(self):
        x = Tensor(rand((4, 5, 6, 2), seed=9))
        k = np.zeros((3, 3, 3, 2, 2))
        k[1, 1, 1] = np.eye(2)
        out = conv3d(x, Tensor(k), (1, 1, 1))
        np.testing.assert_allclose(out.data, x.data)

    def test_sum_kernel_interior_is_27(self):
        x = Tensor(np.ones((5, 5, 5, 1)))
        k = Tensor(np.ones((3, 3, 3, 1, 1)))
        out = conv3d(x, k, (1, 1, 1))
        assert out.data[2, 2, 2, 0] == 27.0
        # corner touches only the 2x2x2 in-bounds neighborhood
        assert out.data[0, 0, 0, 0] == 8.0

    def test_strided_output_extents(self):
        x = Tensor(rand((5, 7, 8, 2), seed=10))
        k = Tensor(rand((3, 3, 3, 2, 4), seed=11))
        out = conv3d(x, k, (2, 2, 3))
        assert out.shape == (3, 4, 3, 4)

    def test_adjoints(self):
        x = Tensor(rand((3, 4, 4, 2), seed=12), requires_grad=True)
        k = Tensor(rand((3, 3, 3, 2, 3), seed=13), requires_grad=True)
        w = Tensor(rand((2, 2, 2, 3), seed=14))
        rep = grad_check(lambda x, k: (conv3d(x, k, (2, 2, 2)) * w).sum(), [x, k], step=1e-5)
        assert rep.max_rel_err < 1e-5
