"""Noise distributions, seeded random streams and column standardization."""

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DegenerateColumnError, ParameterError

FAMILIES = ("beta", "gamma", "gaussian", "gumbel", "exponential", "uniform", "mlp")

# Used when a config names a family without parameters.
DEFAULT_PARAMS = {
    "beta": {"a": 2.0, "b": 2.0},
    "gamma": {"shape": 2.0, "scale": 2.0},
    "gaussian": {"loc": 0.0, "scale": 1.0},
    "gumbel": {"loc": 0.0, "scale": 1.0},
    "exponential": {"scale": 1.0},
    "uniform": {"low": -1.0, "high": 1.0},
    "mlp": {},
}

MLP_HIDDEN = 100
MLP_WEIGHT_BOUND = 1.5


def make_rng(seed, *keys):
    """Return an independent generator for ``(seed, *keys)``.

    Sub-streams are derived through ``SeedSequence`` spawn keys, so
    ``make_rng(s, 0)`` and ``make_rng(s, 1)`` never share state and the same
    arguments always reproduce the same stream.
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(seq))


def child_seed(rng):
    """Draw a 64-bit seed from ``rng`` for a nested stream."""
    return int(rng.integers(0, 2**63 - 1))


@dataclass(frozen=True)
class MlpNoiseTransform:
    sigma: float
    hidden_weights: np.ndarray  # (1, 100)
    hidden_bias: np.ndarray  # (100,)
    out_weights: np.ndarray  # (100, 1)
    out_bias: float

    def __call__(self, z):
        h = special.expit(np.asarray(z)[:, None] @ self.hidden_weights + self.hidden_bias)
        return (h @ self.out_weights)[:, 0] + self.out_bias


def make_mlp_noise_transform(rng):
    b = MLP_WEIGHT_BOUND
    return MlpNoiseTransform(
        sigma=float(rng.uniform(0.5, 1.0)),
        hidden_weights=rng.uniform(-b, b, size=(1, MLP_HIDDEN)),
        hidden_bias=rng.uniform(-b, b, size=MLP_HIDDEN),
        out_weights=rng.uniform(-b, b, size=(MLP_HIDDEN, 1)),
        out_bias=float(rng.uniform(-b, b)),
    )


@dataclass(frozen=True)
class NoiseSpec:
    family: str
    params: dict = field(default_factory=dict)
    transform: MlpNoiseTransform | None = None

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in FAMILIES:
            raise ParameterError(f"unknown noise family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", fam)
        merged = dict(DEFAULT_PARAMS[fam])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ParameterError(f"{fam}: unknown parameters {sorted(unknown)}")
        merged.update({k: float(v) for k, v in self.params.items()})
        object.__setattr__(self, "params", merged)
        _validate(fam, merged)

    @classmethod
    def create(cls, family, rng=None, **params):
        """Build a spec; an ``mlp`` spec needs ``rng`` to realize its transform."""
        transform = None
        if family.lower() == "mlp":
            if rng is None:
                raise ParameterError("mlp noise needs an rng to draw its transform")
            transform = make_mlp_noise_transform(rng)
        return cls(family, params, transform)

    def to_json(self):
        return {"family": self.family, "params": dict(self.params)}


def _validate(fam, p):
    positive = {
        "beta": ("a", "b"),
        "gamma": ("shape", "scale"),
        "gumbel": ("scale",),
        "exponential": ("scale",),
    }
    for key in positive.get(fam, ()):
        if not p[key] > 0:
            raise ParameterError(f"{fam}: parameter {key} must be positive, got {p[key]}")
    # A zero scale / zero-width interval is a point mass; allowed so that the
    # degenerate-column path can be exercised.
    if fam == "gaussian" and p["scale"] < 0:
        raise ParameterError(f"gaussian: scale must be >= 0, got {p['scale']}")
    if fam == "uniform" and p["low"] > p["high"]:
        raise ParameterError(f"uniform: low {p['low']} exceeds high {p['high']}")


def sample_noise(spec, n, rng):
    if n < 1:
        raise ParameterError(f"need n >= 1 samples, got {n}")
    p = spec.params
    fam = spec.family
    if fam == "beta":
        return rng.beta(p["a"], p["b"], size=n)
    if fam == "gamma":
        return rng.gamma(p["shape"], p["scale"], size=n)
    if fam == "gaussian":
        return rng.normal(p["loc"], p["scale"], size=n)
    if fam == "gumbel":
        return rng.gumbel(p["loc"], p["scale"], size=n)
    if fam == "exponential":
        return rng.exponential(p["scale"], size=n)
    if fam == "uniform":
        return rng.uniform(p["low"], p["high"], size=n)
    # mlp
    if spec.transform is None:
        raise ParameterError("mlp noise spec has no realized transform")
    z = rng.normal(0.0, spec.transform.sigma, size=n)
    return standardize(spec.transform(z))


def standardize(column):
    """Divide by the population standard deviation; no centering."""
    x = np.asarray(column, dtype=np.float64)
    if x.size < 2:
        raise DegenerateColumnError(f"need at least 2 entries to standardize, got {x.size}")
    sd = x.std()
    if not np.isfinite(sd) or sd <= 0.0 or sd < 1e-12 * np.abs(x).max():
        raise DegenerateColumnError("column has zero empirical variance")
    return x / sd
