import math

import numpy as np
import pytest

from gem import autograd as ag
from gem.autograd import (
    Parameter,
    Tensor,
    backward,
    concat,
    cross_entropy_loss,
    dropout,
    embedding,
    finite_diff_check,
    gelu,
    layer_norm,
    log_softmax,
    stable_softmax,
    zero_grads,
)
from gem.errors import ValidationError


class TestSoftmax:
    def test_symmetric_pair(self):
        out = stable_softmax(Tensor([0.0, 0.0]))
        np.testing.assert_allclose(out.data, [0.5, 0.5], atol=1e-15)

    def test_analytic_pair(self):
        out = stable_softmax(Tensor([0.0, math.log(3.0)]))
        np.testing.assert_allclose(out.data, [0.25, 0.75], atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(size=(3, 5))
            c = rng.uniform(-1e6, 1e6)
            a = stable_softmax(Tensor(x), axis=-1).data
            b = stable_softmax(Tensor(x + c), axis=-1).data
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 7)) * 50
        out = stable_softmax(Tensor(x), axis=-1).data
        np.testing.assert_allclose(out.sum(axis=-1), np.ones(4), atol=1e-12)

    def test_neg_inf_gets_exact_zero(self):
        x = np.array([[1.0, -np.inf, 2.0]])
        out = stable_softmax(Tensor(x), axis=-1).data
        assert out[0, 1] == 0.0
        np.testing.assert_allclose(out.sum(), 1.0, atol=1e-12)

    def test_empty_axis_rejected(self):
        with pytest.raises(ValidationError):
            stable_softmax(Tensor(np.zeros((2, 0))), axis=-1)


class TestCrossEntropy:
    def test_uniform_logits(self):
        logits = Tensor(np.zeros((2, 4)))
        loss = cross_entropy_loss(logits, [0, 3])
        np.testing.assert_allclose(loss.data, math.log(4.0), atol=1e-12)

    def test_analytic_two_class(self):
        loss = cross_entropy_loss(Tensor([[0.0, math.log(3.0)]]), [1])
        np.testing.assert_allclose(loss.data, -math.log(0.75), atol=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            logits = rng.normal(size=(4, 5)) * 10
            targets = rng.integers(0, 5, size=4)
            loss = cross_entropy_loss(Tensor(logits), targets)
            assert loss.data >= 0.0

    def test_out_of_range_target(self):
        with pytest.raises(ValidationError):
            cross_entropy_loss(Tensor(np.zeros((1, 3))), [3])


class TestLayerNorm:
    def test_constant_row_is_zero(self):
        x = Tensor(np.full((2, 6), 3.7))
        out = layer_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6)))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-9)

    def test_zero_gain_gives_bias(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(3, 4)))
        bias = np.array([1.0, 2.0, 3.0, 4.0])
        out = layer_norm(x, Tensor(np.zeros(4)), Tensor(bias))
        np.testing.assert_allclose(out.data, np.broadcast_to(bias, (3, 4)))

    def test_standardizes(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.normal(size=(1, 64)) * 5 + 2)
        out = layer_norm(x, Tensor(np.ones(64)), Tensor(np.zeros(64)))
        assert abs(out.data.mean()) < 1e-9
        np.testing.assert_allclose(out.data.var(), 1.0, atol=1e-4)


class TestBackward:
    def test_quadratic_grad(self):
        w = Parameter(np.array([1.0, 2.0]), "w")
        loss = (w * w).sum()
        backward(loss)
        np.testing.assert_allclose(w.grad, [2.0, 4.0])

    def test_unused_parameter_zero_grad(self):
        w = Parameter(np.array([1.0, 2.0]), "w")
        u = Parameter(np.array([5.0]), "u")
        loss = (w * w).sum()
        zero_grads([w, u])
        backward(loss)
        np.testing.assert_array_equal(u.grad, [0.0])

    def test_non_scalar_rejected(self):
        w = Parameter(np.array([1.0, 2.0]), "w")
        with pytest.raises(ValidationError):
            backward(w * w)

    def test_graph_reuse_through_shared_node(self):
        w = Parameter(np.array([3.0]), "w")
        y = w * w
        loss = (y + y).sum()
        backward(loss)
        np.testing.assert_allclose(w.grad, [12.0])

    def test_matmul_grads_match_fd(self):
        rng = np.random.default_rng(5)
        a = Parameter(rng.normal(size=(3, 4)), "a")
        b = Parameter(rng.normal(size=(4, 2)), "b")

        def fn():
            return ((a @ b) * (a @ b)).sum()

        report = finite_diff_check(fn, [a, b])
        assert report.max_error < 1e-8

    def test_batched_matmul_broadcast(self):
        rng = np.random.default_rng(6)
        a = Parameter(rng.normal(size=(2, 3, 4)), "a")
        b = Parameter(rng.normal(size=(4, 5)), "b")

        def fn():
            return ((a @ b) ** 2).sum()

        assert finite_diff_check(fn, [a, b]).max_error < 1e-8

    def test_take_concat_embedding(self):
        rng = np.random.default_rng(7)
        table = Parameter(rng.normal(size=(6, 3)), "emb")
        other = Parameter(rng.normal(size=(2, 3)), "other")
        ids = np.array([[1, 1, 4], [0, 5, 2]])

        def fn():
            e = embedding(table, ids)
            cls = e[:, 0, :]
            both = concat([cls, other], axis=-1)
            return (both * both).sum()

        assert finite_diff_check(fn, [table, other]).max_error < 1e-8

    def test_gelu_softmax_composite(self):
        rng = np.random.default_rng(8)
        w = Parameter(rng.normal(size=(4, 4)), "w")
        x = Tensor(rng.normal(size=(2, 4)))

        def fn():
            h = gelu(x @ w)
            return (stable_softmax(h, axis=-1) * h).sum()

        assert finite_diff_check(fn, [w]).max_error < 1e-7


class TestFiniteDiff:
    def test_quadratic_is_exact(self):
        w = Parameter(np.array([1.0, -2.0, 0.5]), "w")

        def fn():
            return (w * w).sum()

        assert finite_diff_check(fn, [w]).max_error <= 1e-9

    def test_softmax_ce_composite(self):
        rng = np.random.default_rng(9)
        logits = Parameter(rng.normal(size=(3, 4)), "logits")
        targets = np.array([0, 2, 3])

        def fn():
            return cross_entropy_loss(logits, targets)

        assert finite_diff_check(fn, [logits]).max_error <= 1e-6

    def test_report_sorted_descending(self):
        a = Parameter(np.array([1.0]), "a")
        b = Parameter(np.array([2.0]), "b")

        def fn():
            return (a * a).sum() + (b * b * b).sum()

        report = finite_diff_check(fn, [a, b])
        errs = [e for _, e in report]
        assert errs == sorted(errs, reverse=True)

    def test_nondeterminism_detected(self):
        w = Parameter(np.array([1.0, 2.0, 3.0, 4.0]), "w")
        rng = np.random.default_rng(10)

        def fn():
            return dropout(w, 0.5, rng, train=True).sum()

        with pytest.raises(ValidationError):
            finite_diff_check(fn, [w])


class TestDropout:
    def test_eval_identity(self):
        x = Tensor(np.arange(6.0))
        out = dropout(x, 0.5, np.random.default_rng(0), train=False)
        assert out is x

    def test_scaling_preserves_mean(self):
        rng = np.random.default_rng(11)
        x = Tensor(np.ones(200000))
        out = dropout(x, 0.2, rng, train=True)
        assert abs(out.data.mean() - 1.0) < 0.01

    def test_deterministic_per_seed(self):
        x = Tensor(np.ones(64))
        a = dropout(x, 0.3, np.random.default_rng(42), train=True).data
        b = dropout(x, 0.3, np.random.default_rng(42), train=True).data
        np.testing.assert_array_equal(a, b)


class TestLogSoftmax:
    def test_matches_log_of_softmax(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(3, 6)) * 30
        a = log_softmax(Tensor(x), axis=-1).data
        b = np.log(stable_softmax(Tensor(x), axis=-1).data)
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestNoGrad:
    def test_no_graph_recorded(self):
        w = Parameter(np.array([1.0]), "w")
        with ag.no_grad():
            out = (w * w).sum()
        assert out._backward is None
        assert not out.requires_grad
