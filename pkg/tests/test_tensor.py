"""Primitive semantics and reverse-mode gradients of the tensor kernel."""

import numpy as np
import pytest

from amortcd import tensor as T
from amortcd.errors import ContractError, ShapeError
from amortcd.noise import make_rng

# 0.5 * (1 + erf(1 / sqrt(2))) evaluated with 30-digit arithmetic.
GELU_ONE = 0.8413447460685429


def param(shape, seed=0, scale=1.0):
    return T.Tensor(make_rng(seed).standard_normal(shape) * scale, requires_grad=True)


def weighted(out, seed=99):
    """Contract an output with fixed random weights so every entry matters."""
    w = make_rng(seed).standard_normal(out.shape)
    return T.sum_(T.mul(out, T.Tensor(w)))


# Each case builds a scalar from named parameters, keeping shapes at most 8 per dim.
CASES = {
    "add": (lambda p: weighted(T.add(p["a"], p["b"])), {"a": (3, 4), "b": (4,)}),
    "mul": (lambda p: weighted(T.mul(p["a"], p["b"])), {"a": (2, 3, 4), "b": (3, 4)}),
    "matmul": (lambda p: weighted(T.matmul(p["a"], p["b"])), {"a": (2, 3, 5), "b": (5, 4)}),
    "batched_matmul": (lambda p: weighted(T.matmul(p["a"], p["b"])), {"a": (2, 3, 5), "b": (2, 5, 4)}),
    "transpose": (lambda p: weighted(T.transpose(p["a"], (2, 0, 1))), {"a": (2, 3, 4)}),
    "reshape": (lambda p: weighted(T.reshape(p["a"], (4, 6))), {"a": (2, 3, 4)}),
    "concat": (lambda p: weighted(T.concat([p["a"], p["b"]], axis=1)), {"a": (2, 3), "b": (2, 5)}),
    "slice": (lambda p: weighted(p["a"][:, 1:3]), {"a": (4, 5)}),
    "sum": (lambda p: weighted(T.sum_(p["a"], axis=1)), {"a": (3, 4)}),
    "mean": (lambda p: weighted(T.mean(p["a"], axis=0)), {"a": (3, 4)}),
    "softmax": (lambda p: weighted(T.softmax(p["a"], axis=-1)), {"a": (3, 6)}),
    "layer_norm": (lambda p: weighted(T.layer_norm(p["a"])), {"a": (3, 6)}),
    "relu": (lambda p: weighted(T.relu(p["a"])), {"a": (4, 5)}),
    "gelu": (lambda p: weighted(T.gelu(p["a"])), {"a": (4, 5)}),
    "sigmoid": (lambda p: weighted(T.sigmoid(p["a"])), {"a": (4, 5)}),
    "softplus": (lambda p: weighted(T.softplus(p["a"])), {"a": (4, 5)}),
    "embedding_lookup": (lambda p: weighted(T.embedding_lookup(p["a"], [0, 2, 2, 1])), {"a": (3, 4)}),
}


class TestForward:
    def test_softmax_symmetric(self):
        assert np.array_equal(T.softmax(T.Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_softmax_rows_sum_to_one(self):
        x = T.Tensor(make_rng(1).standard_normal((7, 8)) * 30)
        assert np.max(np.abs(T.softmax(x).data.sum(-1) - 1)) < 1e-12

    def test_layer_norm_moments(self):
        y = T.layer_norm(T.Tensor(make_rng(2).standard_normal((6, 8)) * 5 + 3)).data
        assert np.max(np.abs(y.mean(-1))) < 1e-12
        assert np.max(np.abs(y.var(-1) - 1)) < 1e-9

    def test_identity_matmul(self):
        a = make_rng(3).standard_normal((4, 4))
        assert np.array_equal(T.matmul(T.Tensor(np.eye(4)), T.Tensor(a)).data, a)

    def test_gelu_reference(self):
        assert T.gelu(T.Tensor(1.0)).item() == pytest.approx(GELU_ONE, abs=1e-15)

    def test_relu_sigmoid_softplus(self):
        x = T.Tensor([-2.0, 0.0, 3.0])
        assert np.array_equal(T.relu(x).data, [0.0, 0.0, 3.0])
        assert T.sigmoid(x).data[1] == 0.5
        assert T.softplus(T.Tensor(0.0)).item() == pytest.approx(np.log(2.0), abs=1e-15)

    def test_softplus_large_input_is_finite(self):
        assert T.softplus(T.Tensor(1000.0)).item() == 1000.0

    def test_deterministic(self):
        def run():
            p = T.Tensor(make_rng(4).standard_normal((5, 8)))
            return T.layer_norm(T.softmax(T.matmul(p, T.transpose(p)))).data.tobytes()

        assert run() == run()

    def test_bce(self):
        logits = T.Tensor(np.zeros(4))
        assert T.binary_cross_entropy_with_logits(logits, [0, 1, 1, 0]).item() == pytest.approx(4 * np.log(2))


class TestShapeErrors:
    def test_matmul_mismatch_reports_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
            T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((4, 5))))

    def test_non_trailing_broadcast(self):
        with pytest.raises(ShapeError):
            T.add(T.Tensor(np.ones((3, 4))), T.Tensor(np.ones(3)))

    def test_concat_and_reshape(self):
        with pytest.raises(ShapeError):
            T.concat([T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((3, 3)))], axis=1)
        with pytest.raises(ShapeError):
            T.reshape(T.Tensor(np.ones(6)), (4, 2))

    def test_embedding_out_of_range(self):
        with pytest.raises(ShapeError):
            T.embedding_lookup(T.Tensor(np.ones((3, 2))), [3])

    def test_bce_shape(self):
        with pytest.raises(ShapeError):
            T.binary_cross_entropy_with_logits(T.Tensor(np.zeros(3)), [0, 1])


class TestBackward:
    def test_sum_gives_ones(self):
        p = param((3, 4))
        T.sum_(p).backward()
        assert np.array_equal(p.grad, np.ones((3, 4)))

    def test_half_square(self):
        p = param((5,), seed=1)
        T.mul(T.sum_(T.mul(p, p)), 0.5).backward()
        assert np.allclose(p.grad, p.data, rtol=0, atol=1e-15)

    def test_non_scalar_loss(self):
        with pytest.raises(ContractError):
            T.mul(param((2,)), 2.0).backward()

    def test_constant_loss(self):
        with pytest.raises(ContractError):
            T.sum_(T.Tensor(np.ones(3))).backward()

    def test_shared_subexpression_accumulates(self):
        p = param((3,), seed=2)
        q = T.mul(p, 2.0)
        T.sum_(T.add(q, q)).backward()
        assert np.array_equal(p.grad, np.full(3, 4.0))

    def test_tape_released(self):
        p = param((2, 2))
        h = T.relu(p)
        T.sum_(h).backward()
        assert h._parents == () and h._backward is None and h.grad is None

    @pytest.mark.parametrize("name", sorted(CASES))
    def test_primitive_gradients(self, name):
        fn, shapes = CASES[name]
        params = {k: param(s, seed=i + 10) for i, (k, s) in enumerate(shapes.items())}
        if name == "relu":
            params["a"].data += np.sign(params["a"].data) * 0.1  # keep away from the kink
        assert T.grad_check(fn, params, tol=1e-6).passed

    def test_every_primitive_is_covered(self):
        covered = {k.replace("batched_", "") for k in CASES}
        assert set(T.PRIMITIVES) <= covered

    def test_three_layer_mlp(self):
        p = {
            "w1": param((3, 8), 1, 0.5), "b1": param((8,), 2, 0.1),
            "w2": param((8, 8), 3, 0.5), "b2": param((8,), 4, 0.1),
            "w3": param((8, 1), 5, 0.5),
        }
        x = T.Tensor(make_rng(6).standard_normal((6, 3)))
        y = make_rng(7).integers(0, 2, (6, 1))

        def loss(q):
            h = T.gelu(T.add(T.matmul(x, q["w1"]), q["b1"]))
            h = T.relu(T.add(T.matmul(h, q["w2"]), q["b2"]))
            return T.binary_cross_entropy_with_logits(T.matmul(h, q["w3"]), y)

        assert T.grad_check(loss, p, tol=1e-6).passed

    def test_attention_block(self):
        p = {k: param((4, 4), i, 0.5) for i, k in enumerate(("wq", "wk", "wv"))}
        x = T.Tensor(make_rng(8).standard_normal((2, 5, 4)))

        def loss(q):
            h = T.layer_norm(x)
            att = T.softmax(T.mul(T.matmul(T.matmul(h, q["wq"]), T.swapaxes(T.matmul(h, q["wk"]), -1, -2)), 0.5))
            return weighted(T.matmul(att, T.matmul(h, q["wv"])))

        assert T.grad_check(loss, p, tol=1e-6).passed

    def test_quadratic_is_exact(self):
        p = {"a": param((4,))}
        rep = T.grad_check(lambda q: T.sum_(T.mul(q["a"], q["a"])), p)
        assert rep.max_rel_error < 1e-10

    def test_broken_rule_is_caught(self):
        def wrong_square(x):
            return T._node(x.data**2, (x,), lambda g: T._accumulate(x, g * x.data), "wrong_square")

        rep = T.grad_check(lambda q: T.sum_(wrong_square(q["a"])), {"a": param((4,), seed=3)})
        assert not rep.passed and rep.max_rel_error > 0.1


class TestRelativeError:
    def test_floor_keeps_small_values_absolute(self):
        assert T.relative_error(np.array([1e-9]), np.array([0.0]))[0] == pytest.approx(1e-5)

    def test_relative_for_large_values(self):
        assert T.relative_error(np.array([2.0]), np.array([1.0]))[0] == 0.5
