"""Maximum-likelihood training with Adam, early stopping and checkpoint I/O."""

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import csiva
from . import tensor as T
from .errors import ConfigError, ContractError, DataIOError, DivergenceError, ShapeError
from .noise import make_rng
from .scm import largest_remainder_counts, mixture_schedule  # noqa: F401  (re-exported)

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "amortcd-checkpoint-v1"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 5
    max_epochs: int = 25
    patience: int = 5
    validation_fraction: float = 0.1
    seed: int = 0
    grad_clip: float = 5.0
    model: csiva.ModelConfig = field(default_factory=csiva.ModelConfig)
    mixture: tuple = ()  # informational: ((class name, ratio), ...)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError(f"validation_fraction must be in (0, 1), got {self.validation_fraction}")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.mixture:
            total = sum(r for _, r in self.mixture)
            if abs(total - 1.0) > 1e-9:
                raise ConfigError(f"mixture ratios sum to {total}, expected 1")

    def to_json(self):
        out = asdict(self)
        out["mixture"] = [list(m) for m in self.mixture]
        return out

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        model = csiva.ModelConfig(**obj.pop("model", {}))
        mixture = tuple(tuple(m) for m in obj.pop("mixture", ()))
        return cls(model=model, mixture=mixture, **obj)


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, applied in place to ``params`` (name -> ndarray)."""
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {name}")
    state.step += 1
    t = state.step
    c1, c2 = 1.0 - beta1**t, 1.0 - beta2**t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def clip_global_norm(grads, max_norm):
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class Checkpoint:
    params: dict  # name -> ndarray
    config: TrainConfig
    curve: list  # [(epoch, train_nll, val_nll)]
    best_epoch: int
    metadata: dict = field(default_factory=dict)

    @property
    def model(self):
        return self.config.model

    def tensors(self):
        return {k: T.Tensor(v, name=k) for k, v in self.params.items()}

    def predict(self, dataset):
        return csiva.predict(self.tensors(), self.model, dataset)

    def predict_batch(self, values):
        return csiva.predict_batch(self.tensors(), self.model, values)


def _stack(datasets):
    sizes = {d.values.shape for d in datasets}
    if len(sizes) != 1:
        raise ContractError(f"all datasets in a corpus must share one shape, got {sorted(sizes)}")
    X = np.stack([d.values for d in datasets])
    Y = csiva.label_targets([d.label for d in datasets])
    return X, Y


def split_indices(n, fraction, seed):
    if n < 2:
        raise ContractError("training needs at least two datasets (train + validation)")
    n_val = min(n - 1, max(1, int(round(fraction * n))))
    perm = make_rng(seed, 1).permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def mean_nll(params, model_cfg, X, Y, batch_size=25):
    """Average per-dataset NLL without building persistent graphs."""
    total = 0.0
    for lo in range(0, len(X), batch_size):
        xb, yb = X[lo : lo + batch_size], Y[lo : lo + batch_size]
        total += csiva.forward_nll(params, model_cfg, xb, yb).item() * len(xb)
    return total / len(X)


def train(cfg, corpus, log_every=0):
    """Fit a model on ``corpus`` (a sequence of datasets) and return the best-validation checkpoint."""
    datasets = list(getattr(corpus, "datasets", corpus))
    if not datasets:
        raise ContractError("cannot train on an empty corpus")
    X, Y = _stack(datasets)
    tr, va = split_indices(len(X), cfg.validation_fraction, cfg.seed)
    params = csiva.init_params(cfg.model, make_rng(cfg.seed, 0))
    state = AdamState()
    curve, best, best_epoch, wait = [], np.inf, 0, 0
    best_params = {k: p.data.copy() for k, p in params.items()}
    max_grad_norm = 0.0
    t0 = time.time()
    for epoch in range(1, cfg.max_epochs + 1):
        order = tr[make_rng(cfg.seed, 2, epoch).permutation(len(tr))]
        running = 0.0
        for it, lo in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[lo : lo + cfg.batch_size]
            loss = csiva.forward_nll(params, cfg.model, X[idx], Y[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}", epoch=epoch)
            running += value * len(idx)
            loss.backward()
            grads = {k: p.grad for k, p in params.items() if p.grad is not None}
            max_grad_norm = max(max_grad_norm, clip_global_norm(grads, cfg.grad_clip))
            try:
                adam_step({k: params[k].data for k in grads}, grads, state, cfg.learning_rate)
            except DivergenceError as exc:
                raise DivergenceError(f"{exc} at epoch {epoch}", epoch=epoch) from None
            for p in params.values():
                p.grad = None
            if log_every and (it + 1) % log_every == 0:
                logger.info("epoch %d iter %d loss %.4f (%.0fs)", epoch, it + 1, running / (lo + len(idx)), time.time() - t0)
        train_nll = running / len(order)
        val_nll = mean_nll(params, cfg.model, X[va], Y[va])
        if not np.isfinite(val_nll):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}", epoch=epoch)
        curve.append((epoch, train_nll, val_nll))
        logger.info("epoch %d train %.4f val %.4f (%.0fs)", epoch, train_nll, val_nll, time.time() - t0)
        if val_nll < best:
            best, best_epoch, wait = val_nll, epoch, 0
            best_params = {k: p.data.copy() for k, p in params.items()}
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    meta = {"grad_clip": cfg.grad_clip, "max_grad_norm": max_grad_norm, "n_train": len(tr), "n_val": len(va)}
    return Checkpoint(best_params, cfg, curve, best_epoch, meta)


# Checkpoint files -----------------------------------------------------------------


def checkpoint_bytes(ckpt):
    manifest, offset, chunks = {}, 0, []
    for name, arr in ckpt.params.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        manifest[name] = {"shape": list(a.shape), "offset": offset}
        chunks.append(a.tobytes())
        offset += a.nbytes
    header = {
        "format": CHECKPOINT_FORMAT,
        "config": ckpt.config.to_json(),
        "parameters": manifest,
        "curve": [list(c) for c in ckpt.curve],
        "best_epoch": ckpt.best_epoch,
        "metadata": ckpt.metadata,
    }
    return json.dumps(header, separators=(",", ":")).encode() + b"\n" + b"".join(chunks)


def save_checkpoint(ckpt, path):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(ckpt))


def load_checkpoint(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataIOError(f"cannot read checkpoint {path}: {exc}") from None
    head, sep, payload = raw.partition(b"\n")
    if not sep:
        raise DataIOError(f"{path}: missing checkpoint header")
    try:
        header = json.loads(head)
    except json.JSONDecodeError as exc:
        raise DataIOError(f"{path}: corrupt checkpoint header ({exc})") from None
    if header.get("format") != CHECKPOINT_FORMAT:
        raise DataIOError(f"{path}: unknown checkpoint format {header.get('format')!r}")
    params = {}
    for name, info in header["parameters"].items():
        count = int(np.prod(info["shape"])) if info["shape"] else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=info["offset"])
        params[name] = arr.reshape(info["shape"]).astype(np.float64)
    cfg = TrainConfig.from_json(header["config"])
    curve = [tuple(c) for c in header["curve"]]
    return Checkpoint(params, cfg, curve, header["best_epoch"], header.get("metadata", {}))


def with_model(cfg, **model_overrides):
    return replace(cfg, model=replace(cfg.model, **model_overrides))
