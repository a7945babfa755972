"""JSON experiment configuration with strict key checking.

A config names a data mixture plus optional corpus size, model and optimizer
settings::

    {
      "preset": "desk",
      "n_datasets": 2000,
      "n_samples": 200,
      "seed": 0,
      "mixture": [{"class": "linear-mlp", "ratio": 0.5}, {"class": "pnl-mlp", "ratio": 0.5}],
      "model": {"embed_dim": 32},
      "train": {"learning_rate": 0.001}
    }

``preset`` selects the base values ("desk" or "paper"); every other key
overrides them. Error messages carry the line of the offending key.
"""

import json
import re
from dataclasses import dataclass, fields, replace

from .csiva import ModelConfig
from .errors import ConfigError, DataIOError
from .noise import NoiseSpec, make_rng
from .presets import SCALES
from .scm import ClassSpec, CorpusConfig
from .train import TrainConfig

TOP_KEYS = {"preset", "n_datasets", "n_samples", "seed", "mixture", "model", "train"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"model", "mixture", "seed"}
MODEL_KEYS = {f.name for f in fields(ModelConfig)}
ENTRY_KEYS = {"class", "ratio", "noise_params"}


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: CorpusConfig
    train: TrainConfig
    seed: int
    scale: str

    def to_json(self):
        return {"scale": self.scale, "seed": self.seed, "corpus": self.corpus.to_json(), "train": self.train.to_json()}


def _line(text, key):
    m = re.search(r'"%s"\s*:' % re.escape(key), text or "")
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(text, key, expectation):
    line = _line(text, key)
    where = f" (line {line})" if line else ""
    raise ConfigError(f"{key}{where}: {expectation}")


def _check_keys(text, obj, allowed, context):
    if not isinstance(obj, dict):
        _fail(text, context, "expected a JSON object")
    for key in obj:
        if key not in allowed:
            _fail(text, key, f"unknown key in {context}; allowed: {sorted(allowed)}")


def _int(text, obj, key, low):
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < low:
        _fail(text, key, f"expected an integer >= {low}, got {v!r}")
    return v


def _mixture(text, entries):
    if not isinstance(entries, list) or not entries:
        _fail(text, "mixture", "expected a non-empty list of classes")
    specs = []
    for e in entries:
        e = {"class": e, "ratio": 1.0 / len(entries)} if isinstance(e, str) else e
        _check_keys(text, e, ENTRY_KEYS, "mixture")
        if "class" not in e:
            _fail(text, "mixture", "every entry needs a 'class'")
        ratio = e.get("ratio", 1.0 / len(entries))
        if isinstance(ratio, bool) or not isinstance(ratio, (int, float)) or ratio < 0:
            _fail(text, "mixture", f"ratio must be a non-negative number, got {ratio!r}")
        try:
            spec = ClassSpec.parse(e["class"], float(ratio), noise_params=dict(e.get("noise_params", {})))
            NoiseSpec.create(spec.noise, make_rng(0), **spec.noise_params)
        except (ConfigError, TypeError) as exc:
            _fail(text, "mixture", str(exc))
        specs.append(spec)
    total = sum(s.ratio for s in specs)
    if abs(total - 1.0) > 1e-9:
        _fail(text, "mixture", f"ratios must sum to 1, got {total:g}")
    return tuple(specs)


def config_from_dict(obj, text=None):
    _check_keys(text, obj, TOP_KEYS, "config")
    scale_name = obj.get("preset", "desk")
    if scale_name not in SCALES:
        _fail(text, "preset", f"expected one of {sorted(SCALES)}, got {scale_name!r}")
    scale = SCALES[scale_name]
    seed = _int(text, obj, "seed", 0) if "seed" in obj else 0
    n_datasets = _int(text, obj, "n_datasets", 1) if "n_datasets" in obj else scale.n_train
    n_samples = _int(text, obj, "n_samples", 2) if "n_samples" in obj else scale.n_samples
    if "mixture" not in obj:
        _fail(text, "mixture", "required (list of classes with ratios)")
    classes = _mixture(text, obj["mixture"])

    model = scale.train.model
    if "model" in obj:
        _check_keys(text, obj["model"], MODEL_KEYS, "model")
        try:
            model = replace(model, **obj["model"])
        except (ConfigError, TypeError) as exc:
            _fail(text, "model", str(exc))
    if any(c.empty for c in classes) and model.classes != "three_graph":
        model = replace(model, classes="three_graph")
    train = replace(scale.train, model=model, seed=seed, mixture=tuple((c.name, c.ratio) for c in classes))
    if "train" in obj:
        _check_keys(text, obj["train"], TRAIN_KEYS, "train")
        try:
            train = replace(train, **obj["train"])
        except (ConfigError, TypeError) as exc:
            _fail(text, "train", str(exc))
    try:
        corpus = CorpusConfig(n_datasets, n_samples, classes)
    except ConfigError as exc:
        _fail(text, "mixture", str(exc))
    return ExperimentConfig(corpus, train, seed, scale_name)


def parse_config(path):
    """Read and validate a JSON experiment config."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise DataIOError(f"cannot read config {path}: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(obj, text)
