"""Bivariate structural causal models and synthetic corpus generation.

A dataset is drawn in canonical (cause, effect) order and then laid out
according to its graph label: ``x_to_y`` keeps the order, ``y_to_x`` swaps
the columns. Noise draws are standardized before entering the structural
equations and both emitted columns are standardized last.
"""

import enum
import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    ConfigError,
    DegenerateColumnError,
    NumericError,
    ParameterError,
    UnsupportedPointwiseError,
)
from .noise import FAMILIES, NoiseSpec, child_seed, make_rng, sample_noise, standardize

logger = logging.getLogger(__name__)

PRELU_SLOPE = 0.25
NN_HIDDEN = 10
GP_JITTER = 1e-6
GP_MAX_JITTER = 1e-3
MAX_ATTEMPTS = 5

MECHANISMS = ("linear", "nonlinear", "pnl", "gp", "gp_pnl")
SPECIAL_CLASSES = ("invertible_forward", "invertible_backward")


class GraphLabel(str, enum.Enum):
    X_TO_Y = "x_to_y"
    Y_TO_X = "y_to_x"
    EMPTY = "empty"

    @property
    def adjacency(self):
        a = np.zeros((2, 2), dtype=np.int64)
        if self is GraphLabel.X_TO_Y:
            a[0, 1] = 1
        elif self is GraphLabel.Y_TO_X:
            a[1, 0] = 1
        return a

    @classmethod
    def from_adjacency(cls, adjacency):
        """Return the label for a 2x2 binary matrix, or ``None`` if it is not a valid DAG label."""
        a = np.asarray(adjacency).reshape(2, 2)
        if a[0, 0] or a[1, 1] or (a[0, 1] and a[1, 0]):
            return None
        if a[0, 1]:
            return cls.X_TO_Y
        if a[1, 0]:
            return cls.Y_TO_X
        return cls.EMPTY

    def flipped(self):
        return {GraphLabel.X_TO_Y: GraphLabel.Y_TO_X, GraphLabel.Y_TO_X: GraphLabel.X_TO_Y}.get(self, self)


# Mechanisms ---------------------------------------------------------------


@dataclass(frozen=True)
class Linear:
    coef: float


@dataclass(frozen=True)
class NeuralNet:
    w1: np.ndarray  # (1, 10)
    b1: np.ndarray  # (10,)
    w2: np.ndarray  # (10, 1)
    b2: float
    slope: float = PRELU_SLOPE


@dataclass(frozen=True)
class GaussianProcess:
    bandwidth: float = 1.0
    jitter: float = GP_JITTER


@dataclass(frozen=True)
class PostNonlinear:
    inner: object

    @staticmethod
    def outer(z):
        return np.asarray(z) ** 3


def describe_mechanism(m):
    if isinstance(m, Linear):
        return {"kind": "linear", "coef": m.coef}
    if isinstance(m, NeuralNet):
        return {"kind": "nonlinear", "hidden": NN_HIDDEN, "prelu_slope": m.slope}
    if isinstance(m, GaussianProcess):
        return {"kind": "gp", "bandwidth": m.bandwidth, "jitter": m.jitter}
    if isinstance(m, PostNonlinear):
        return {"kind": "pnl", "outer": "cube", "inner": describe_mechanism(m.inner)}
    if m is None:
        return None
    raise ParameterError(f"unknown mechanism {m!r}")


def sample_linear_coefficient(rng):
    magnitude = rng.uniform(0.5, 3.0)
    return float(magnitude if rng.random() < 0.5 else -magnitude)


def sample_nn_mechanism(rng):
    return NeuralNet(
        w1=rng.standard_normal((1, NN_HIDDEN)),
        b1=rng.standard_normal(NN_HIDDEN),
        w2=rng.standard_normal((NN_HIDDEN, 1)),
        b2=float(rng.standard_normal()),
        slope=PRELU_SLOPE,
    )


def sample_mechanism(kind, rng):
    if kind == "linear":
        return Linear(sample_linear_coefficient(rng))
    if kind == "nonlinear":
        return sample_nn_mechanism(rng)
    if kind == "gp":
        return GaussianProcess()
    if kind == "pnl":
        return PostNonlinear(sample_nn_mechanism(rng))
    if kind == "gp_pnl":
        return PostNonlinear(GaussianProcess())
    raise ParameterError(f"unknown mechanism kind {kind!r}; expected one of {MECHANISMS}")


def apply_mechanism(m, x):
    """Evaluate a pointwise mechanism. For post-nonlinear models only the inner map is applied."""
    x = np.asarray(x, dtype=np.float64)
    if isinstance(m, Linear):
        return m.coef * x
    if isinstance(m, NeuralNet):
        h = x[:, None] @ m.w1 + m.b1
        h = np.where(h > 0, h, m.slope * h)
        return (h @ m.w2)[:, 0] + m.b2
    if isinstance(m, PostNonlinear):
        return apply_mechanism(m.inner, x)
    if isinstance(m, GaussianProcess):
        raise UnsupportedPointwiseError("Gaussian-process mechanisms are sampled jointly, not pointwise")
    raise ParameterError(f"unknown mechanism {m!r}")


def rbf_kernel(x, bandwidth=1.0):
    x = np.asarray(x, dtype=np.float64)
    d2 = (x[:, None] - x[None, :]) ** 2
    return np.exp(-d2 / (2.0 * bandwidth**2))


def sample_gp_mechanism_values(parent, bandwidth, jitter, rng):
    """One joint draw of f(parent) from a zero-mean GP with an RBF kernel.

    Jitter is escalated tenfold on Cholesky failure up to ``GP_MAX_JITTER``.
    """
    x = np.asarray(parent, dtype=np.float64)
    if x.size < 1:
        raise ParameterError("GP sampling needs at least one parent value")
    K = rbf_kernel(x, bandwidth)
    j = jitter
    while True:
        try:
            L = np.linalg.cholesky(K + j * np.eye(x.size))
            break
        except np.linalg.LinAlgError:
            j *= 10.0
            if j > GP_MAX_JITTER * (1 + 1e-9):
                raise NumericError(f"Cholesky failed even with jitter {GP_MAX_JITTER}") from None
            logger.debug("escalating GP jitter to %g", j)
    return L @ rng.standard_normal(x.size)


# SCMs and datasets ---------------------------------------------------------


@dataclass(frozen=True)
class ScmSpec:
    graph: GraphLabel
    mechanism: object
    noise_cause: NoiseSpec
    noise_effect: NoiseSpec

    def summary(self):
        return {
            "graph": self.graph.value,
            "mechanism": describe_mechanism(self.mechanism) if self.graph is not GraphLabel.EMPTY else None,
            "noise_cause": self.noise_cause.to_json(),
            "noise_effect": self.noise_effect.to_json(),
        }


@dataclass
class Dataset:
    values: np.ndarray  # (n, 2), standardized columns
    label: GraphLabel
    provenance: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.values.shape[0]

    def swapped(self):
        """The same observations with the two columns exchanged and the label flipped."""
        prov = dict(self.provenance, swapped=not self.provenance.get("swapped", False))
        return Dataset(self.values[:, ::-1].copy(), self.label.flipped(), prov)


def _draw_columns(scm, n, rng):
    cause = standardize(sample_noise(scm.noise_cause, n, rng))
    noise = standardize(sample_noise(scm.noise_effect, n, rng))
    if scm.graph is GraphLabel.EMPTY:
        return cause, noise
    m = scm.mechanism
    inner = m.inner if isinstance(m, PostNonlinear) else m
    if isinstance(inner, GaussianProcess):
        f = sample_gp_mechanism_values(cause, inner.bandwidth, inner.jitter, rng)
    else:
        f = apply_mechanism(inner, cause)
    effect = f + noise
    if isinstance(m, PostNonlinear):
        effect = PostNonlinear.outer(effect)
    return cause, effect


def generate_dataset(scm, n, rng, seed=None):
    if n < 2:
        raise ParameterError(f"a dataset needs n >= 2 observations, got {n}")
    for attempt in range(MAX_ATTEMPTS):
        try:
            cause, effect = _draw_columns(scm, n, rng)
            cols = (standardize(cause), standardize(effect))
        except DegenerateColumnError:
            logger.debug("degenerate column on attempt %d, redrawing", attempt + 1)
            continue
        if scm.graph is GraphLabel.Y_TO_X:
            cols = cols[::-1]
        prov = {"scm": scm.summary(), "seed": seed, "attempts": attempt + 1}
        return Dataset(np.column_stack(cols), scm.graph, prov)
    raise DegenerateColumnError(f"degenerate column in {MAX_ATTEMPTS} consecutive attempts")


# Corpora ------------------------------------------------------------------


@dataclass(frozen=True)
class ClassSpec:
    """One SCM class of a corpus, e.g. mechanism ``linear`` with ``uniform`` noise."""

    mechanism: str
    noise: str = "gaussian"
    ratio: float = 1.0
    noise_params: dict = field(default_factory=dict)
    empty: bool = False

    def __post_init__(self):
        if self.mechanism not in MECHANISMS + SPECIAL_CLASSES:
            raise ConfigError(f"unknown mechanism {self.mechanism!r}")
        if self.noise not in FAMILIES:
            raise ConfigError(f"unknown noise family {self.noise!r}")
        if self.ratio < 0:
            raise ConfigError(f"mixture ratio must be non-negative, got {self.ratio}")

    @property
    def name(self):
        if self.empty:
            return f"empty-{self.noise}"
        if self.mechanism in SPECIAL_CLASSES:
            return self.mechanism
        return f"{self.mechanism}-{self.noise}"

    @classmethod
    def parse(cls, name, ratio=1.0, **kw):
        """``"linear-uniform"``, ``"empty-gaussian"``, ``"invertible_forward"``..."""
        if name in SPECIAL_CLASSES:
            return cls(name, "gumbel", ratio, **kw)
        mech, _, noise = name.rpartition("-")
        if mech == "empty":
            return cls("linear", noise, ratio, empty=True, **kw)
        return cls(mech, noise, ratio, **kw)

    def to_json(self):
        out = {"mechanism": self.mechanism, "noise": self.noise, "ratio": self.ratio}
        if self.noise_params:
            out["noise_params"] = dict(self.noise_params)
        if self.empty:
            out["empty"] = True
        return out


@dataclass(frozen=True)
class CorpusConfig:
    n_datasets: int
    n_samples: int
    classes: tuple

    def __post_init__(self):
        if not self.classes:
            raise ConfigError("corpus config has no classes")
        if self.n_datasets < 1:
            raise ConfigError(f"n_datasets must be >= 1, got {self.n_datasets}")
        if self.n_samples < 2:
            raise ConfigError(f"n_samples must be >= 2, got {self.n_samples}")
        total = sum(c.ratio for c in self.classes)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"mixture ratios sum to {total}, expected 1")
        object.__setattr__(self, "classes", tuple(self.classes))

    @classmethod
    def single(cls, name, n_datasets, n_samples):
        return cls(n_datasets, n_samples, (ClassSpec.parse(name),))

    @classmethod
    def mixture(cls, names, n_datasets, n_samples, ratios=None):
        ratios = ratios or [1.0 / len(names)] * len(names)
        return cls(n_datasets, n_samples, tuple(ClassSpec.parse(n, r) for n, r in zip(names, ratios)))

    def to_json(self):
        return {
            "n_datasets": self.n_datasets,
            "n_samples": self.n_samples,
            "classes": [c.to_json() for c in self.classes],
        }


def largest_remainder_counts(ratios, total):
    """Integer counts proportional to ``ratios`` that sum to ``total``.

    Ties among fractional remainders go to the earlier entry.
    """
    if any(r < 0 for r in ratios):
        raise ConfigError("mixture ratios must be non-negative")
    s = sum(ratios)
    if s <= 0:
        raise ConfigError("mixture ratios must have a positive sum")
    # Rational arithmetic keeps 1/3-style ties exact.
    quotas = [Fraction(r).limit_denominator(10**9) / Fraction(s).limit_denominator(10**9) * total for r in ratios]
    counts = [int(q) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return counts


def mixture_schedule(classes, ratios, total, seed=0):
    """Class sequence with largest-remainder counts, shuffled deterministically by ``seed``."""
    if len(classes) != len(ratios):
        raise ConfigError("classes and ratios differ in length")
    counts = largest_remainder_counts(ratios, total)
    seq = [c for c, k in zip(classes, counts) for _ in range(k)]
    order = make_rng(seed, 0x5C4ED).permutation(len(seq))
    return [seq[i] for i in order]


def _balanced_labels(n_items, first, rng):
    half = n_items // 2
    extra = [first] if n_items % 2 else []
    labels = [GraphLabel.X_TO_Y] * half + [GraphLabel.Y_TO_X] * half + extra
    return [labels[i] for i in rng.permutation(len(labels))]


def sample_scm(cls_spec, label, rng):
    """Draw a fresh SCM instance of the given class with the given graph."""
    noise_c = NoiseSpec.create(cls_spec.noise, rng, **cls_spec.noise_params)
    noise_e = NoiseSpec.create(cls_spec.noise, rng, **cls_spec.noise_params)
    if cls_spec.empty or label is GraphLabel.EMPTY:
        return ScmSpec(GraphLabel.EMPTY, None, noise_c, noise_e)
    return ScmSpec(label, sample_mechanism(cls_spec.mechanism, rng), noise_c, noise_e)


def generate_class_dataset(cls_spec, label, n, seed):
    """Generate one dataset of a class from its per-dataset seed."""
    rng = make_rng(seed)
    if cls_spec.mechanism in SPECIAL_CLASSES and not cls_spec.empty:
        from .identifiability import InvertiblePairModel, sample_invertible_pair

        direction = InvertiblePairModel(cls_spec.mechanism.split("_")[1])
        ds = sample_invertible_pair(direction, n, rng)
        if ds.label is not label:
            ds = ds.swapped()
        ds.provenance.update(seed=seed)
    else:
        ds = generate_dataset(sample_scm(cls_spec, label, rng), n, rng, seed=seed)
    ds.provenance["scm_class"] = cls_spec.name
    return ds


@dataclass
class Corpus:
    config: CorpusConfig
    seed: int
    entries: list  # of (class name, label, per-dataset seed)
    datasets: list

    def __len__(self):
        return len(self.datasets)

    @property
    def labels(self):
        return [d.label for d in self.datasets]

    def class_names(self):
        return [e[0] for e in self.entries]


def plan_corpus(config, seed):
    """Deterministic (class, label, dataset seed) triples for a corpus."""
    classes = list(config.classes)
    sched = mixture_schedule(list(range(len(classes))), [c.ratio for c in classes], config.n_datasets, seed)
    label_rng = make_rng(seed, 0x1ABE1)
    labels = [None] * len(sched)
    odd_first = GraphLabel.X_TO_Y
    for ci, cls_spec in enumerate(classes):
        idx = [i for i, c in enumerate(sched) if c == ci]
        if cls_spec.empty:
            for i in idx:
                labels[i] = GraphLabel.EMPTY
            continue
        for i, lab in zip(idx, _balanced_labels(len(idx), odd_first, label_rng)):
            labels[i] = lab
        if len(idx) % 2:
            odd_first = odd_first.flipped()
    seeds = make_rng(seed, 0xDA7A).integers(0, 2**63 - 1, size=len(sched))
    return [(classes[c], labels[i], int(seeds[i])) for i, c in enumerate(sched)]


def _generate_entry(args):
    return generate_class_dataset(*args)


def generate_corpus(config, seed, workers=1):
    """Generate every dataset of a corpus. ``seed`` is an int or a Generator.

    With ``workers > 1`` datasets are produced in a process pool; each one depends
    only on its own sub-seed, so the output does not depend on the worker count.
    """
    if isinstance(seed, np.random.Generator):
        seed = child_seed(seed)
    plan = plan_corpus(config, seed)
    jobs = [(c, lab, config.n_samples, s) for c, lab, s in plan]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            datasets = list(pool.map(_generate_entry, jobs, chunksize=16))
    else:
        datasets = [_generate_entry(j) for j in jobs]
    entries = [(c.name, lab, s) for c, lab, s in plan]
    return Corpus(config, int(seed), entries, datasets)
