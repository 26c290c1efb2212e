"""Tensor-core tests: op semantics, gradients, determinism."""

import numpy as np
import pytest

import neurosem.autodiff as ad
from neurosem.autodiff import Graph
from neurosem.errors import ContractError, DimensionError
from neurosem.rng import stream_generator

from conftest import finite_difference_check


def g64():
    return Graph(np.float64)


class TestMatmul:
    def test_identity(self):
        g = g64()
        a = g.constant(np.eye(2))
        b = g.constant([[1.0, 2.0], [3.0, 4.0]])
        out = ad.matmul(a, b)
        np.testing.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])

    def test_annihilating_product(self):
        g = g64()
        a = g.constant([[1.0, 0.0], [0.0, 0.0]])
        b = g.constant([[0.0, 0.0], [0.0, 1.0]])
        out = ad.matmul(a, b)
        np.testing.assert_array_equal(out.data, np.zeros((2, 2)))

    def test_against_triple_loop(self, rng):
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        expect = np.zeros((3, 2))
        for i in range(3):
            for j in range(2):
                for k in range(4):
                    expect[i, j] += a[i, k] * b[k, j]
        g = g64()
        out = ad.matmul(g.constant(a), g.constant(b))
        np.testing.assert_allclose(out.data, expect, atol=1e-6)

    def test_shape_mismatch_names_both_shapes(self):
        g = g64()
        a = g.constant(np.zeros((2, 3)))
        b = g.constant(np.zeros((4, 2)))
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 2\)"):
            ad.matmul(a, b)

    def test_gradient_rule(self, rng):
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        g = g64()
        ta = g.tensor(a, requires_grad=True)
        tb = g.tensor(b, requires_grad=True)
        out = ad.matmul(ta, tb)
        loss = ad.sum_(out)
        g.backward(loss)
        gc = np.ones((3, 2))
        np.testing.assert_allclose(ta.grad, gc @ b.T)
        np.testing.assert_allclose(tb.grad, a.T @ gc)


class TestSoftmax:
    def test_symmetry(self):
        g = g64()
        out = ad.softmax(g.constant([0.0, 0.0]), axis=0)
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_large_logit_no_overflow(self):
        g = g64()
        out = ad.softmax(g.constant([1000.0, 0.0]), axis=0)
        assert np.isfinite(out.data).all()
        np.testing.assert_allclose(out.data, [1.0, 0.0], atol=1e-12)

    def test_matches_extended_precision_oracle(self):
        import mpmath
        mpmath.mp.dps = 50
        xs = [1.0, 2.0, 3.0]
        exps = [mpmath.exp(x) for x in xs]
        total = sum(exps)
        expect = np.array([float(e / total) for e in exps])
        g = g64()
        out = ad.softmax(g.constant(xs), axis=0)
        np.testing.assert_allclose(out.data, expect, rtol=1e-14)

    def test_rows_sum_to_one_property(self, rng):
        x = rng.normal(size=(5, 7)) * 10
        g = g64()
        out = ad.softmax(g.constant(x), axis=1)
        assert (out.data >= 0).all()
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)


class TestLayerNorm:
    def test_constant_row_maps_to_zero(self):
        g = g64()
        x = g.constant(np.full((2, 4), 3.5))
        out = ad.layer_norm(x, g.constant(np.ones(4)), g.constant(np.zeros(4)))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-12)

    def test_normalization_contract(self):
        g = g64()
        x = g.constant([[1.0, 2.0, 3.0]])
        out = ad.layer_norm(x, g.constant(np.ones(3)), g.constant(np.zeros(3)),
                            eps=1e-12)
        assert abs(out.data.mean()) < 1e-6
        assert abs(out.data.var() - 1.0) < 1e-6

    def test_gradient_vs_finite_differences(self, rng):
        x = rng.uniform(-1, 1, size=(3, 5))
        gamma = rng.uniform(0.5, 1.5, size=5)
        beta = rng.uniform(-0.5, 0.5, size=5)

        def build(g, ts):
            return ad.sum_(ad.square(ad.layer_norm(ts[0], ts[1], ts[2], eps=1e-3)))

        assert finite_difference_check(build, [x, gamma, beta]) < 1e-4


class TestL2Normalize:
    def test_345_triangle(self):
        g = g64()
        out = ad.l2_normalize(g.constant([3.0, 4.0]), axis=0)
        np.testing.assert_allclose(out.data, [0.6, 0.8])

    def test_guarded_zero(self):
        g = g64()
        out = ad.l2_normalize(g.constant([0.0, 0.0]), axis=0)
        np.testing.assert_array_equal(out.data, [0.0, 0.0])

    def test_unit_norm_property(self, rng):
        for _ in range(20):
            v = rng.normal(size=6)
            if np.linalg.norm(v) < 1e-6:
                continue
            g = g64()
            out = ad.l2_normalize(g.constant(v), axis=0)
            assert abs(np.linalg.norm(out.data) - 1.0) < 1e-6


class TestBackward:
    def test_sum_gives_ones(self, rng):
        x = rng.normal(size=(3, 4, 2))
        g = g64()
        t = g.tensor(x, requires_grad=True)
        g.backward(ad.sum_(t))
        np.testing.assert_array_equal(t.grad, np.ones_like(x))

    def test_dot_gradients(self, rng):
        x = rng.normal(size=7)
        y = rng.normal(size=7)
        g = g64()
        tx = g.tensor(x, requires_grad=True)
        ty = g.tensor(y, requires_grad=True)
        g.backward(ad.dot(tx, ty))
        np.testing.assert_allclose(tx.grad, y)
        np.testing.assert_allclose(ty.grad, x)

    def test_non_scalar_loss_rejected(self, rng):
        g = g64()
        t = g.tensor(rng.normal(size=(2, 2)), requires_grad=True)
        with pytest.raises(ContractError, match="scalar"):
            g.backward(ad.square(t))

    def test_input_gradient_available(self, rng):
        # graph inputs get gradients too (saliency relies on this)
        x = rng.normal(size=(2, 3))
        w = rng.normal(size=(3, 2))
        g = g64()
        tx = g.tensor(x, requires_grad=True)
        out = ad.sum_(ad.matmul(tx, g.constant(w)))
        grads = g.backward(out)
        assert tx.node_id in grads
        np.testing.assert_allclose(tx.grad, np.ones((2, 2)) @ w.T)

    def test_deterministic_bit_identical(self, rng):
        x = rng.normal(size=(4, 4))

        def run():
            g = g64()
            t = g.tensor(x, requires_grad=True)
            y = ad.softmax(ad.matmul(t, t), axis=1)
            g.backward(ad.mean(ad.square(y)))
            return t.grad.copy()

        g1, g2 = run(), run()
        assert np.array_equal(g1, g2)


class TestGradChecksAllOps:
    """Central-difference verification for every differentiable op."""

    CASES = {
        "add": lambda g, ts: ad.sum_(ad.square(ad.add(ts[0], ts[1]))),
        "sub": lambda g, ts: ad.sum_(ad.square(ad.sub(ts[0], ts[1]))),
        "mul": lambda g, ts: ad.sum_(ad.mul(ts[0], ts[1])),
        "matmul": lambda g, ts: ad.sum_(ad.square(ad.matmul(ts[0], ts[1]))),
        "linear": lambda g, ts: ad.sum_(ad.square(ad.linear(ts[0], ts[1], ts[2]))),
        "scale": lambda g, ts: ad.sum_(ad.scale(ad.square(ts[0]), 2.5)),
        "square": lambda g, ts: ad.sum_(ad.square(ts[0])),
        "reshape": lambda g, ts: ad.sum_(ad.square(ad.reshape(ts[0], (4, 3)))),
        "transpose": lambda g, ts: ad.sum_(ad.square(ad.transpose(ts[0], (1, 0)))),
        "mean": lambda g, ts: ad.sum_(ad.mean(ad.square(ts[0]), axis=1)),
        "softmax": lambda g, ts: ad.sum_(ad.square(ad.softmax(ts[0], axis=1))),
        "logsumexp": lambda g, ts: ad.sum_(ad.logsumexp(ts[0], axis=1)),
        "gelu": lambda g, ts: ad.sum_(ad.gelu(ts[0])),
        "l2_normalize": lambda g, ts: ad.sum_(ad.square(
            ad.add(ad.l2_normalize(ts[0], axis=1), 0.3))),
        "standardize": lambda g, ts: ad.sum_(ad.square(ad.standardize(ts[0]))),
        "diagonal": lambda g, ts: ad.sum_(ad.square(ad.diagonal(
            ad.matmul(ts[0], ad.transpose(ts[0], (1, 0)))))),
    }

    @pytest.mark.parametrize("name", sorted(CASES))
    def test_gradcheck(self, name, rng):
        build = self.CASES[name]
        if name in ("add", "sub", "mul"):
            arrays = [rng.uniform(-1, 1, size=(3, 4)),
                      rng.uniform(-1, 1, size=(3, 4))]
        elif name == "matmul":
            arrays = [rng.uniform(-1, 1, size=(3, 4)),
                      rng.uniform(-1, 1, size=(4, 2))]
        elif name == "linear":
            arrays = [rng.uniform(-1, 1, size=(2, 3, 4)),
                      rng.uniform(-1, 1, size=(4, 2)),
                      rng.uniform(-1, 1, size=2)]
        elif name == "diagonal":
            arrays = [rng.uniform(-1, 1, size=(4, 4))]
        else:
            arrays = [rng.uniform(-1, 1, size=(3, 4))]
        assert finite_difference_check(build, arrays) < 1e-4

    def test_dropout_gradcheck(self, rng):
        x = rng.uniform(-1, 1, size=(4, 5))

        def build(g, ts):
            gen = stream_generator(7, "gradcheck/dropout")  # same mask each build
            return ad.sum_(ad.square(ad.dropout(ts[0], 0.4, gen)))

        assert finite_difference_check(build, [x]) < 1e-4

    def test_broadcast_add_gradcheck(self, rng):
        arrays = [rng.uniform(-1, 1, size=(3, 4)), rng.uniform(-1, 1, size=4)]

        def build(g, ts):
            return ad.sum_(ad.square(ad.add(ts[0], ts[1])))

        assert finite_difference_check(build, arrays) < 1e-4


class TestDtypes:
    def test_f32_graph_keeps_f32(self):
        g = Graph(np.float32)
        t = g.tensor(np.ones((2, 2)))
        out = ad.softmax(ad.matmul(t, t), axis=1)
        assert out.data.dtype == np.float32

    def test_mixed_graph_rejected(self):
        g1, g2 = g64(), g64()
        a = g1.constant(np.ones(2))
        b = g2.constant(np.ones(2))
        with pytest.raises(ContractError):
            ad.add(a, b)
