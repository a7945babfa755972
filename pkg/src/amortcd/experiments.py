"""Cached desk-scale experiment runs.

Training a desk model takes tens of minutes on one core, so trained
checkpoints and evaluation reports are cached on disk. Cache keys hash the
run configuration together with the source of every module that influences
the result, so editing the data generator or the model invalidates them.
"""

import hashlib
import json
import logging
import os
from dataclasses import replace
from pathlib import Path

import numpy as np

from .evaluation import EvalReport, evaluate
from .baselines import anm_direction, linear_direction, random_direction
from .noise import make_rng
from .presets import SCALES
from .scm import ClassSpec, CorpusConfig, generate_corpus
from .train import load_checkpoint, save_checkpoint, train

logger = logging.getLogger(__name__)

CACHE_ENV = "AMORTCD_CACHE"
TRAIN_SEED = 10_001
TEST_SEED = 20_001
MODEL_MODULES = ("noise", "scm", "identifiability", "tensor", "csiva", "train")
EVAL_MODULES = MODEL_MODULES + ("evaluation", "baselines")
BASELINE_MODULES = ("noise", "scm", "identifiability", "evaluation", "baselines")


def cache_dir():
    path = Path(os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "amortcd")
    path.mkdir(parents=True, exist_ok=True)
    return path


def source_fingerprint(modules):
    h = hashlib.sha256()
    here = Path(__file__).parent
    for m in modules:
        h.update((here / f"{m}.py").read_bytes())
    return h.hexdigest()


def _key(obj, modules):
    blob = json.dumps(obj, sort_keys=True) + source_fingerprint(modules)
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


def mixture_corpus(mixture, n_datasets, n_samples):
    classes = tuple(ClassSpec.parse(c, r) for c, r in mixture if r > 0)
    return CorpusConfig(n_datasets, n_samples, classes)


def _as_mixture(m):
    return ((m, 1.0),) if isinstance(m, str) else tuple((c, float(r)) for c, r in m)


def test_corpus(test_class, scale="desk", n_samples=None, n_datasets=None, seed=TEST_SEED):
    s = SCALES[scale]
    cfg = mixture_corpus(_as_mixture(test_class), n_datasets or s.n_test, n_samples or s.n_samples)
    return generate_corpus(cfg, seed)


def _model_plan(mixture, scale, seed, data_seed, train_overrides):
    mixture = _as_mixture(mixture)
    s = SCALES[scale]
    cfg = replace(s.train, seed=seed, mixture=mixture, **train_overrides)
    corpus_cfg = mixture_corpus(mixture, s.n_train, s.n_samples)
    spec = {"train": cfg.to_json(), "corpus": corpus_cfg.to_json(), "data_seed": data_seed}
    return cfg, corpus_cfg, spec, cache_dir() / f"model-{_key(spec, MODEL_MODULES)}.ckpt"


def trained_model(mixture, scale="desk", seed=0, data_seed=TRAIN_SEED, **train_overrides):
    """Train (or load from cache) a model on a mixture such as ``"linear-uniform"``."""
    cfg, corpus_cfg, spec, path = _model_plan(mixture, scale, seed, data_seed, train_overrides)
    if path.exists():
        return load_checkpoint(path)
    logger.info("training %s (%s)", cfg.mixture, path.name)
    ckpt = train(cfg, generate_corpus(corpus_cfg, data_seed), log_every=100)
    ckpt.metadata["spec"] = spec
    save_checkpoint(ckpt, path)
    return ckpt


def _cached_report(spec, compute, modules=EVAL_MODULES):
    path = cache_dir() / f"report-{_key(spec, modules)}.json"
    if path.exists():
        return EvalReport.load(path)
    report = compute()
    report.save(path)
    return report


def model_report(mixture, test_class, scale="desk", seed=0):
    """Mean test SHD of the model trained on ``mixture`` over the ``test_class`` corpus."""
    # keyed on the checkpoint name, so any change to the training setup re-evaluates
    model_file = _model_plan(mixture, scale, seed, TRAIN_SEED, {})[3].name
    spec = {"model": model_file, "test": _as_mixture(test_class), "scale": scale, "seed": seed,
            "n": SCALES[scale].n_samples, "N": SCALES[scale].n_test}

    def compute():
        ckpt = trained_model(mixture, scale, seed)
        corpus = test_corpus(test_class, scale)
        preds = ckpt.predict_batch(np.stack([d.values for d in corpus.datasets]))
        name = "+".join(c for c, _ in _as_mixture(mixture))
        return evaluate(None, corpus, name, _name(test_class), predictions=preds)

    return _cached_report(spec, compute)


def baseline_report(method, test_class, n_samples=None, n_datasets=None, scale="desk", seed=0):
    s = SCALES[scale]
    spec = {"baseline": method, "test": _as_mixture(test_class),
            "n": n_samples or s.n_samples, "N": n_datasets or s.n_test, "seed": seed}

    def compute():
        corpus = test_corpus(test_class, scale, n_samples, n_datasets)
        if method == "random":
            preds = [random_direction(make_rng(seed, 0xBA5E, i)) for i in range(len(corpus))]
        else:
            fn = linear_direction if method == "linear" else anm_direction
            preds = [fn(d) for d in corpus.datasets]
        return evaluate(None, corpus, f"baseline-{method}", _name(test_class), predictions=preds)

    return _cached_report(spec, compute, BASELINE_MODULES)


def _name(mixture):
    return "+".join(f"{c}:{r:g}" if r != 1 else c for c, r in _as_mixture(mixture))
