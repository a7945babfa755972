"""Optimizer, training loop, early stopping and checkpoint files."""

import numpy as np
import pytest

from amortcd import csiva
from amortcd.errors import ConfigError, ContractError, DataIOError, DivergenceError
from amortcd.noise import make_rng
from amortcd.scm import CorpusConfig, Dataset, GraphLabel, generate_corpus
from amortcd.train import (
    AdamState,
    TrainConfig,
    adam_step,
    checkpoint_bytes,
    clip_global_norm,
    load_checkpoint,
    mean_nll,
    mixture_schedule,
    save_checkpoint,
    split_indices,
    train,
    _stack,
)

TINY = csiva.ModelConfig.tiny()


def tiny_cfg(**kw):
    base = dict(learning_rate=1e-3, batch_size=4, max_epochs=3, patience=5, model=TINY)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def small_corpus():
    return generate_corpus(CorpusConfig.single("linear-uniform", 24, 16), 5)


class TestAdam:
    def test_zero_gradient(self):
        p = {"w": np.array([1.0, -2.0])}
        adam_step(p, {"w": np.zeros(2)}, AdamState(), 0.1)
        assert np.array_equal(p["w"], [1.0, -2.0])

    def test_first_step_is_signed_lr(self):
        p = {"w": np.zeros(3)}
        adam_step(p, {"w": np.array([0.3, -7.0, 0.2])}, AdamState(), 0.01)
        assert np.allclose(p["w"], [-0.01, 0.01, -0.01], atol=1e-9, rtol=0)

    def test_constant_gradient_steps(self):
        p, state = {"w": np.zeros(1)}, AdamState()
        for _ in range(5):
            adam_step(p, {"w": np.array([2.0])}, state, 0.01)
        assert state.step == 5
        assert p["w"][0] == pytest.approx(-0.05, abs=1e-9)

    def test_nan_gradient(self):
        with pytest.raises(DivergenceError):
            adam_step({"w": np.zeros(2)}, {"w": np.array([np.nan, 0.0])}, AdamState(), 0.1)

    def test_clip(self):
        g = {"a": np.array([3.0]), "b": np.array([4.0])}
        assert clip_global_norm(g, 1.0) == 5.0
        assert np.allclose([g["a"][0], g["b"][0]], [0.6, 0.8])
        g = {"a": np.array([0.3])}
        clip_global_norm(g, 5.0)
        assert g["a"][0] == 0.3


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [{"batch_size": 0}, {"patience": 0}, {"max_epochs": 0}, {"validation_fraction": 1.0},
         {"learning_rate": -1.0}, {"mixture": (("a", 0.5), ("b", 0.4))}],
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)

    def test_json_round_trip(self):
        cfg = tiny_cfg(mixture=(("linear-mlp", 0.5), ("pnl-mlp", 0.5)))
        assert TrainConfig.from_json(cfg.to_json()) == cfg

    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.batch_size, cfg.max_epochs, cfg.validation_fraction, cfg.grad_clip) == (5, 25, 0.1, 5.0)


class TestSchedule:
    def test_fifty_fifty(self):
        assert sorted(mixture_schedule(["lin", "nl"], [0.5, 0.5], 10)) == ["lin"] * 5 + ["nl"] * 5

    def test_single_class(self):
        assert mixture_schedule(["lin"], [1.0], 4) == ["lin"] * 4

    def test_thirds(self):
        s = mixture_schedule(["a", "b", "c"], [1 / 3] * 3, 100, seed=2)
        assert sorted(s.count(k) for k in "abc") == [33, 33, 34]
        assert s == mixture_schedule(["a", "b", "c"], [1 / 3] * 3, 100, seed=2)

    def test_negative_ratio(self):
        with pytest.raises(ConfigError):
            mixture_schedule(["a", "b"], [1.5, -0.5], 10)


class TestSplit:
    def test_sizes_and_disjoint(self):
        tr, va = split_indices(2000, 0.1, 0)
        assert len(va) == 200 and len(tr) == 1800 and not set(tr) & set(va)

    def test_too_small(self):
        with pytest.raises(ContractError):
            split_indices(1, 0.1, 0)


class TestTraining:
    def test_loss_decreases_on_easy_corpus(self):
        rng = make_rng(3)
        base = rng.standard_normal((12, 2))
        corpus = [Dataset(base.copy(), GraphLabel.X_TO_Y) for _ in range(20)]
        ckpt = train(tiny_cfg(max_epochs=4, learning_rate=3e-3), corpus)
        assert ckpt.curve[-1][1] < ckpt.curve[0][1]

    def test_patience_stops(self, small_corpus):
        ckpt = train(tiny_cfg(learning_rate=0.0, patience=1, max_epochs=10), small_corpus)
        assert [e for e, _, _ in ckpt.curve] == [1, 2] and ckpt.best_epoch == 1

    def test_fixed_parameters_train_loss_is_mean_nll(self, small_corpus):
        cfg = tiny_cfg(learning_rate=0.0, max_epochs=1)
        ckpt = train(cfg, small_corpus)
        X, Y = _stack(small_corpus.datasets)
        tr, _ = split_indices(len(X), cfg.validation_fraction, cfg.seed)
        direct = mean_nll(ckpt.tensors(), TINY, X[tr], Y[tr])
        assert abs(ckpt.curve[0][1] - direct) < 1e-9

    def test_best_epoch_parameters_returned(self, small_corpus):
        cfg = tiny_cfg(max_epochs=4, learning_rate=3e-3)
        ckpt = train(cfg, small_corpus)
        X, Y = _stack(small_corpus.datasets)
        _, va = split_indices(len(X), cfg.validation_fraction, cfg.seed)
        best = min(ckpt.curve, key=lambda c: c[2])
        assert ckpt.best_epoch == best[0]
        assert mean_nll(ckpt.tensors(), TINY, X[va], Y[va]) == pytest.approx(best[2], abs=1e-12)

    def test_reproducible_bytes(self, small_corpus):
        a = train(tiny_cfg(max_epochs=2), small_corpus)
        b = train(tiny_cfg(max_epochs=2), small_corpus)
        assert a.curve == b.curve and checkpoint_bytes(a) == checkpoint_bytes(b)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_epoch(self, small_corpus):
        bad = [Dataset(d.values * np.nan, d.label) for d in small_corpus.datasets]
        with pytest.raises(DivergenceError) as exc:
            train(tiny_cfg(), bad)
        assert exc.value.epoch == 1

    def test_ragged_corpus(self):
        corpus = [Dataset(np.ones((5, 2)), GraphLabel.X_TO_Y), Dataset(np.ones((6, 2)), GraphLabel.Y_TO_X)]
        with pytest.raises(ContractError):
            train(tiny_cfg(), corpus)

    def test_empty_corpus(self):
        with pytest.raises(ContractError):
            train(tiny_cfg(), [])

    def test_metadata_records_clip(self, small_corpus):
        ckpt = train(tiny_cfg(max_epochs=1), small_corpus)
        assert ckpt.metadata["grad_clip"] == 5.0 and ckpt.metadata["max_grad_norm"] > 0


class TestCheckpoint:
    def test_round_trip(self, small_corpus, tmp_path):
        ckpt = train(tiny_cfg(max_epochs=1), small_corpus)
        path = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, path)
        back = load_checkpoint(path)
        assert back.config == ckpt.config and back.best_epoch == ckpt.best_epoch
        assert all(np.array_equal(back.params[k], ckpt.params[k]) for k in ckpt.params)
        assert checkpoint_bytes(back) == path.read_bytes()
        x = small_corpus.datasets[0]
        assert np.array_equal(back.predict(x).probs, ckpt.predict(x).probs)

    def test_header_layout(self, small_corpus):
        raw = checkpoint_bytes(train(tiny_cfg(max_epochs=1), small_corpus))
        head, _, payload = raw.partition(b"\n")
        import json

        manifest = json.loads(head)["parameters"]
        total = sum(8 * int(np.prod(v["shape"] or [1])) for v in manifest.values())
        assert len(payload) == total

    @pytest.mark.parametrize("content", [b"", b"not json\n", b'{"format": "other"}\n'])
    def test_corrupt(self, tmp_path, content):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(content)
        with pytest.raises(DataIOError):
            load_checkpoint(path)

    def test_missing(self, tmp_path):
        with pytest.raises(DataIOError):
            load_checkpoint(tmp_path / "nope.ckpt")
