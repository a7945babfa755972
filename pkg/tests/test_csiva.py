"""Shapes, symmetries and gradients of the alternating-attention model."""

import numpy as np
import pytest

from amortcd import csiva as C
from amortcd import tensor as T
from amortcd.errors import ConfigError, ContractError
from amortcd.noise import NoiseSpec, make_rng
from amortcd.scm import GraphLabel, Linear, ScmSpec, generate_dataset

LN4 = 4 * np.log(2.0)


@pytest.fixture(scope="module")
def tiny():
    cfg = C.ModelConfig.tiny()
    return cfg, C.init_params(cfg, make_rng(0))


@pytest.fixture(scope="module")
def desk():
    cfg = C.ModelConfig()
    return cfg, C.init_params(cfg, make_rng(1))


def data(n, seed=0, B=None):
    shape = (n, 2) if B is None else (B, n, 2)
    return make_rng(seed).standard_normal(shape)


def encode(params, cfg, x):
    return C.encoder_forward(params, cfg, C.embed(params, cfg, x))


class TestConfig:
    def test_desk_defaults(self):
        cfg = C.ModelConfig()
        assert (cfg.embed_dim, cfg.hidden_dim, cfg.enc_layers, cfg.dec_layers, cfg.heads) == (32, 32, 2, 2, 4)

    def test_full_scale_preset(self):
        cfg = C.ModelConfig.paper()
        assert (cfg.embed_dim, cfg.enc_layers, cfg.dec_layers, cfg.heads) == (64, 8, 8, 8)

    @pytest.mark.parametrize("kw", [{"embed_dim": 30}, {"max_nodes": 3}, {"classes": "four"}, {"heads": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            C.ModelConfig(**kw)

    def test_init_is_seeded(self):
        a = C.init_params(C.ModelConfig.tiny(), make_rng(5))
        b = C.init_params(C.ModelConfig.tiny(), make_rng(5))
        assert all(np.array_equal(a[k].data, b[k].data) for k in a)


class TestEmbedding:
    def test_shape(self):
        cfg = C.ModelConfig.tiny()
        emb = C.embed(C.init_params(cfg, make_rng(0)), cfg, data(3))
        assert emb.shape == (1, 4, 2, 8)

    def test_node_identity_constant_per_node(self, tiny):
        cfg, p = tiny
        ident = C.embed(p, cfg, data(6)).data[0, :, :, cfg.embed_dim // 2 :]
        assert np.all(ident == ident[:1])
        assert not np.array_equal(ident[0, 0], ident[0, 1])

    def test_equal_values_equal_halves(self, tiny):
        cfg, p = tiny
        x = np.array([[0.7, 0.7], [0.7, -1.0]])
        vals = C.embed(p, cfg, x).data[0, :2, :, : cfg.embed_dim // 2]
        assert np.array_equal(vals[0, 0], vals[0, 1]) and np.array_equal(vals[0, 0], vals[1, 0])

    def test_empty_dataset(self, tiny):
        cfg, p = tiny
        with pytest.raises(ContractError):
            C.embed(p, cfg, np.zeros((0, 2)))
        with pytest.raises(ContractError):
            C.embed(p, cfg, np.zeros((4, 3)))


class TestEncoder:
    def test_row_permutation_equivariance(self, desk):
        cfg, p = desk
        x = data(9, seed=2)
        perm = make_rng(3).permutation(9)
        a, b = encode(p, cfg, x).data[0], encode(p, cfg, x[perm]).data[0]
        assert np.max(np.abs(a[:9][perm] - b[:9])) < 1e-12
        assert np.max(np.abs(a[9] - b[9])) < 1e-12

    def test_zero_attention_outputs_stop_mixing(self, tiny):
        cfg, p = tiny
        q = dict(p)
        for name in p:
            if ".attn.o." in name:
                q[name] = T.Tensor(np.zeros_like(p[name].data))
        x = data(5, seed=4)
        y = x.copy()
        y[3] += 1.0
        a, b = encode(q, cfg, x).data[0], encode(q, cfg, y).data[0]
        assert np.array_equal(a[[0, 1, 2, 4, 5]], b[[0, 1, 2, 4, 5]])
        assert not np.array_equal(a[3], b[3])

    def test_single_sample(self, tiny):
        cfg, p = tiny
        assert encode(p, cfg, data(1)).shape == (1, 2, 2, cfg.embed_dim)


class TestSummary:
    def test_shape(self, desk):
        cfg, p = desk
        s = C.summarize(p, cfg, encode(p, cfg, data(7, B=3)))
        assert s.shape == (3, 2, cfg.hidden_dim)

    def test_full_scale_shape(self):
        cfg = C.ModelConfig.paper()
        p = C.init_params(cfg, make_rng(0))
        assert C.summarize(p, cfg, encode(p, cfg, data(3))).shape[1:] == (2, 64)

    def test_single_sample_weight_one(self, tiny):
        cfg, p = tiny
        enc = encode(p, cfg, data(1))
        s, w = C.summarize(p, cfg, enc, return_weights=True)
        assert np.allclose(w.data, 1.0, atol=0)
        v = C._linear(p, "sum.v", enc[:, :1].transpose(0, 2, 1, 3)).reshape(1, 2, cfg.embed_dim)
        assert np.allclose(s.data, C._linear(p, "sum.o", v).data, atol=1e-12)

    def test_permutation_invariance(self, desk):
        cfg, p = desk
        x = data(20, seed=5)
        perm = make_rng(6).permutation(20)
        a = C.summarize(p, cfg, encode(p, cfg, x)).data
        b = C.summarize(p, cfg, encode(p, cfg, x[perm])).data
        assert np.max(np.abs(a - b)) < 1e-9


class TestLoss:
    def test_zero_logits(self, tiny):
        cfg, p = tiny
        q = dict(p)
        q["head.w"] = T.Tensor(np.zeros_like(p["head.w"].data))
        q["head.b"] = T.Tensor(np.zeros_like(p["head.b"].data))
        loss = C.forward_nll(q, cfg, data(4), GraphLabel.X_TO_Y.adjacency)
        assert loss.item() == pytest.approx(LN4, abs=1e-12)
        assert loss.item() == pytest.approx(2.772589, abs=1e-6)

    def test_confident_limit(self):
        target = GraphLabel.Y_TO_X.adjacency.reshape(-1)
        signs = 2.0 * target - 1.0
        losses = [T.binary_cross_entropy_with_logits(T.Tensor(k * signs), target).item() for k in (0, 1, 5, 20)]
        assert losses[0] == pytest.approx(LN4)
        assert all(a > b for a, b in zip(losses, losses[1:])) and losses[-1] < 1e-7

    def test_bad_target(self, tiny):
        cfg, p = tiny
        s = C.summarize(p, cfg, encode(p, cfg, data(4)))
        with pytest.raises(ContractError):
            C.decode_nll(p, cfg, s, [0, 1, 0])
        with pytest.raises(ContractError):
            C.decode_nll(p, cfg, s, [0, 2, 0, 0])

    def test_end_to_end_gradients(self, tiny):
        cfg, p = tiny
        x = data(5, seed=7)
        target = GraphLabel.X_TO_Y.adjacency
        params = {k: T.Tensor(v.data.copy(), requires_grad=True) for k, v in p.items()}
        rep = T.grad_check(lambda q: C.forward_nll(q, cfg, x, target), params, tol=1e-6)
        assert rep.passed, rep.max_rel_error

    def test_initial_loss_near_chance(self, desk):
        cfg, p = desk
        rng = make_rng(8)
        labels = [GraphLabel.X_TO_Y if rng.random() < 0.5 else GraphLabel.Y_TO_X for _ in range(16)]
        loss = C.forward_nll(p, cfg, data(30, seed=9, B=16), C.label_targets(labels)).item()
        assert abs(loss - LN4) < 0.5


class TestDecoding:
    def test_four_decisions(self, tiny):
        cfg, p = tiny
        pred = C.predict(p, cfg, data(6))
        assert pred.probs.shape == (4,) and pred.adjacency.shape == (2, 2)
        assert np.all((pred.probs > 0) & (pred.probs < 1))

    def test_deterministic(self, desk):
        cfg, p = desk
        a, b = C.predict(p, cfg, data(10)), C.predict(p, cfg, data(10))
        assert np.array_equal(a.probs, b.probs) and a.graph == b.graph

    def test_all_ones_is_invalid(self, tiny):
        cfg, p = tiny
        q = dict(p)
        q["head.b"] = T.Tensor(np.full_like(p["head.b"].data, 50.0))
        pred = C.predict(q, cfg, data(6))
        assert np.array_equal(pred.adjacency, np.ones((2, 2)))
        assert pred.graph == "invalid" and not pred.valid

    def test_all_zeros_is_empty(self, tiny):
        cfg, p = tiny
        q = dict(p)
        q["head.b"] = T.Tensor(np.full_like(p["head.b"].data, -50.0))
        assert C.predict(q, cfg, data(6)).graph is GraphLabel.EMPTY

    def test_batch_matches_single(self, desk):
        cfg, p = desk
        x = data(12, seed=10, B=3)
        batch = C.predict_batch(p, cfg, x)
        for i in range(3):
            assert np.allclose(batch[i].probs, C.predict(p, cfg, x[i]).probs, atol=1e-12)

    def test_row_permutation_same_prediction(self, desk):
        cfg, p = desk
        x = data(25, seed=11)
        perm = make_rng(12).permutation(25)
        a, b = C.predict(p, cfg, x), C.predict(p, cfg, x[perm])
        assert a.graph == b.graph and np.array_equal(a.adjacency, b.adjacency)
        assert np.max(np.abs(a.probs - b.probs)) < 1e-9

    @pytest.mark.parametrize("c", [1e-3, 2.0, 1e3])
    def test_scaled_raw_data_same_prediction(self, desk, c):
        cfg, p = desk

        def run(scale):
            scm = ScmSpec(
                GraphLabel.X_TO_Y, Linear(1.3),
                NoiseSpec("uniform", {"low": -scale, "high": scale}),
                NoiseSpec("uniform", {"low": -scale, "high": scale}),
            )
            return C.predict(p, cfg, generate_dataset(scm, 40, make_rng(13)))

        a, b = run(1.0), run(c)
        assert a.graph == b.graph and np.allclose(a.probs, b.probs, atol=1e-9)
