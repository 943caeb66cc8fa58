"""Primitive op semantics and adjoint checks for the tensor core."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dvt.numerics import (
    Rng,
    Tensor,
    concat,
    cross_entropy,
    gelu,
    grad_check,
    layer_norm,
    matmul,
    no_grad,
    set_debug_checks,
    softmax,
    transpose,
)


def rand(shape, seed=0, lo=-1.0, hi=1.0):
    return Rng(seed).uniform(shape, lo, hi, np.float64)


class TestMatmul:
    def test_identity(self):
        m = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = matmul(Tensor(np.eye(2)), m)
        np.testing.assert_array_equal(out.data, m.data)

    def test_hand_arithmetic(self):
        out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        assert out.data.tolist() == [[11.0]]

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))

    def test_adjoints_match_finite_differences(self):
        a = Tensor(rand((3, 4), seed=1), requires_grad=True)
        b = Tensor(rand((4, 2), seed=2), requires_grad=True)
        w = Tensor(rand((3, 2), seed=3))
        rep = grad_check(lambda a, b: (matmul(a, b) * w).sum(), [a, b], step=1e-5)
        assert rep.max_rel_err < 1e-7

    def test_batched_lhs(self):
        a = Tensor(rand((2, 3, 4), seed=4), requires_grad=True)
        b = Tensor(rand((4, 5), seed=5), requires_grad=True)
        w = Tensor(rand((2, 3, 5), seed=6))
        rep = grad_check(lambda a, b: (matmul(a, b) * w).sum(), [a, b])
        assert rep.max_rel_err < 1e-7
        np.testing.assert_allclose(matmul(a, b).data, a.data @ b.data)


class TestSoftmax:
    def test_uniform_on_equal_logits(self):
        out = softmax(Tensor([0.0, 0.0, 0.0, 0.0]), axis=0)
        np.testing.assert_allclose(out.data, [0.25] * 4)

    def test_no_overflow_on_large_logits(self):
        out = softmax(Tensor([1000.0, 1000.0]), axis=0)
        np.testing.assert_allclose(out.data, [0.5, 0.5])
        assert np.all(np.isfinite(out.data))

    def test_adjoint(self):
        x = Tensor(rand((8,), seed=7, lo=-2, hi=2), requires_grad=True)
        w = Tensor(rand((8,), seed=8))
        rep = grad_check(lambda x: (softmax(x, 0) * w).sum(), [x])
        assert rep.max_rel_err < 1e-6

    @given(st.integers(0, 2**31 - 1), st.integers(2, 9))
    @settings(max_examples=30, deadline=None)
    def test_rows_sum_to_one_and_positive(self, seed, n):
        x = Tensor(Rng(seed).uniform((3, n), -50, 50, np.float64))
        y = softmax(x, axis=1).data
        np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(y > 0)


class TestLayerNorm:
    def test_constant_row_vanishes(self):
        x = Tensor(np.full((2, 5), 3.7))
        out = layer_norm(x, Tensor(np.ones(5)), Tensor(np.zeros(5)))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-6)

    def test_zero_gamma_gives_beta(self):
        x = Tensor(rand((4, 6), seed=9))
        out = layer_norm(x, Tensor(np.zeros(6)), Tensor(np.full(6, 2.5)))
        np.testing.assert_allclose(out.data, 2.5)

    def test_adjoint(self):
        x = Tensor(rand((3, 6), seed=10), requires_grad=True)
        gamma = Tensor(rand((6,), seed=11), requires_grad=True)
        beta = Tensor(rand((6,), seed=12), requires_grad=True)
        w = Tensor(rand((3, 6), seed=13))
        rep = grad_check(lambda x, g, b: (layer_norm(x, g, b) * w).sum(), [x, gamma, beta])
        assert rep.max_rel_err < 1e-6


class TestMiscOps:
    def test_gelu_adjoint(self):
        x = Tensor(rand((10,), seed=14, lo=-3, hi=3), requires_grad=True)
        w = Tensor(rand((10,), seed=15))
        rep = grad_check(lambda x: (gelu(x) * w).sum(), [x])
        assert rep.max_rel_err < 1e-6

    def test_cross_entropy_matches_manual(self):
        logits = Tensor(rand((4, 3), seed=16), requires_grad=True)
        labels = np.array([0, 2, 1, 1])
        loss = cross_entropy(logits, labels)
        p = np.exp(logits.data) / np.exp(logits.data).sum(axis=1, keepdims=True)
        expected = -np.log(p[np.arange(4), labels]).mean()
        np.testing.assert_allclose(loss.item(), expected, rtol=1e-12)
        rep = grad_check(lambda l: cross_entropy(l, labels), [logits])
        assert rep.max_rel_err < 1e-6

    def test_shape_ops_adjoints(self):
        x = Tensor(rand((2, 3, 4), seed=17), requires_grad=True)
        w = Tensor(rand((8, 6), seed=18))

        def f(x):
            y = transpose(x, (1, 0, 2)).reshape(3, 8)
            z = concat([y, y], axis=1)
            return (matmul(z[:, ::2], w) * 0.5).sum()

        rep = grad_check(f, [x])
        assert rep.max_rel_err < 1e-7

    def test_broadcast_add_and_slice(self):
        x = Tensor(rand((2, 3, 4), seed=19), requires_grad=True)
        b = Tensor(rand((4,), seed=20), requires_grad=True)
        rep = grad_check(lambda x, b: ((x + b) * (x + b)).sum(), [x, b])
        assert rep.max_rel_err < 1e-7

    def test_mean_over_axes(self):
        x = Tensor(rand((3, 4, 5), seed=21), requires_grad=True)
        rep = grad_check(lambda x: (x.mean(axis=(0, 1)) * x.mean(axis=(0, 1))).sum(), [x])
        assert rep.max_rel_err < 1e-7


class TestGradCheckHarness:
    def test_quadratic_analytic_vs_numeric(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        rep = grad_check(lambda x: (x * x).sum(), [x], step=1e-5)
        x.zero_grad()
        (Tensor(x.data, requires_grad=True),)
        y = (x * x).sum()
        y.backward()
        np.testing.assert_allclose(x.grad, [2.0, 4.0])
        assert rep.max_rel_err < 1e-9

    def test_composed_layer_norm_matmul(self):
        x = Tensor(rand((3, 5), seed=22), requires_grad=True)
        w = Tensor(rand((5, 5), seed=23), requires_grad=True)
        gamma = Tensor(np.ones(5), requires_grad=True)
        beta = Tensor(np.zeros(5), requires_grad=True)
        probe = Tensor(rand((3, 5), seed=24))  # un-weighted sum of LN rows is constant
        rep = grad_check(lambda x, w, g, b: (layer_norm(matmul(x, w), g, b) * probe).sum(),
                         [x, w, gamma, beta])
        assert rep.max_rel_err < 1e-6

    def test_reports_failing_coordinates(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)

        def broken(x):
            out = (x * x).sum()
            out._backward, keep = (lambda g: x._accumulate(np.array([0.0, 4.0]) * g)), out._backward
            return out

        rep = grad_check(broken, [x])
        assert not rep.ok(1e-4)
        assert (0, 0) == rep.failures[0][:2]


class TestDebugAndNoGrad:
    def test_debug_checks_flag_nan(self):
        set_debug_checks(True)
        try:
            with pytest.raises(FloatingPointError):
                softmax(Tensor([np.inf, -np.inf]), axis=0)
        finally:
            set_debug_checks(False)

    def test_no_grad_skips_graph(self):
        x = Tensor(rand((3,), seed=24), requires_grad=True)
        with no_grad():
            y = (x * x).sum()
        assert y._backward is None and not y.requires_grad


def test_determinism_bit_identical():
    def run():
        rng = Rng(123)
        a = Tensor(rng.split("a").uniform((16, 16), -1, 1, np.float64), requires_grad=True)
        b = Tensor(rng.split("b").uniform((16, 16), -1, 1, np.float64), requires_grad=True)
        out = softmax(matmul(a, b), axis=1).sum()
        out.backward()
        return out.data.tobytes(), a.grad.tobytes()

    assert run() == run()
