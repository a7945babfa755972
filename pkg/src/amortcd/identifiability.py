"""Closed-form densities and residual checkers for bivariate identifiability.

The invertible pair: ``Y = -X + N`` with standard Gumbel ``X`` and ``N``
admits the backward additive model ``X = log(1 + exp(-Y)) + N~`` with a
logistic ``Y`` and ``p(n) = exp(-2n - exp(-n))``. Both factorizations give
the same joint density, so the pair is a worked non-identifiable example
across the linear and nonlinear additive model classes.
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import InvertibilityError, ParameterError, UndefinedPointError
from .noise import standardize
from .scm import Dataset, GraphLabel

GRID = np.linspace(-5.0, 5.0, 100)
FD_STEP = 1e-4
DENOM_TOL = 1e-12


def _fd_derivatives(fn, h):
    """Central differences of orders 1-3. The third order uses a wider stencil."""

    def d1(x):
        return (fn(x + h) - fn(x - h)) / (2 * h)

    def d2(x):
        return (fn(x + h) - 2 * fn(x) + fn(x - h)) / h**2

    def d3(x):
        k = 10 * h
        return (fn(x + 2 * k) - 2 * fn(x + k) + 2 * fn(x - k) - fn(x - 2 * k)) / (2 * k**3)

    return d1, d2, d3


@dataclass(frozen=True)
class LogDensity1D:
    """A log-density with its first three derivatives."""

    log_pdf: object
    d1: object
    d2: object
    d3: object
    name: str = "custom"

    @classmethod
    def from_log_pdf(cls, log_pdf, h=FD_STEP, name="custom"):
        return cls(log_pdf, *_fd_derivatives(log_pdf, h), name=name)

    def pdf(self, x):
        return np.exp(self.log_pdf(x))


def gaussian_log_density():
    c = -0.5 * np.log(2 * np.pi)
    return LogDensity1D(
        lambda x: c - 0.5 * np.square(x),
        lambda x: -np.asarray(x, dtype=float),
        lambda x: -np.ones_like(np.asarray(x, dtype=float)),
        lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        name="gaussian",
    )


def gumbel_log_density():
    """Standard Gumbel, ``log p(x) = -x - exp(-x)``."""
    return LogDensity1D(
        lambda x: -x - np.exp(-x),
        lambda x: -1.0 + np.exp(-x),
        lambda x: -np.exp(-x),
        lambda x: np.exp(-x),
        name="gumbel",
    )


def logistic_log_density():
    """Standard logistic, ``log p(y) = -y - 2 log(1 + exp(-y))``."""

    def d3(y):
        s = special.expit(y)
        return -2 * s * (1 - s) * (1 - 2 * s)

    return LogDensity1D(
        lambda y: -y - 2 * np.logaddexp(0.0, -y),
        lambda y: -1.0 + 2 * special.expit(-y),
        lambda y: -2 * special.expit(y) * special.expit(-y),
        d3,
        name="logistic",
    )


def tilde_noise_log_density():
    """Backward noise of the invertible pair, ``log p(n) = -2n - exp(-n)``."""
    return LogDensity1D(
        lambda n: -2 * n - np.exp(-n),
        lambda n: -2.0 + np.exp(-n),
        lambda n: -np.exp(-n),
        lambda n: np.exp(-n),
        name="tilde_noise",
    )


# Mechanisms with derivatives ----------------------------------------------


@dataclass(frozen=True)
class Mechanism1D:
    f: object
    d1: object
    d2: object
    d3: object
    name: str = "custom"

    def __call__(self, x):
        return self.f(x)

    @classmethod
    def from_function(cls, f, h=FD_STEP, name="custom"):
        return cls(f, *_fd_derivatives(f, h), name=name)


def identity():
    one = lambda x: np.ones_like(np.asarray(x, dtype=float))  # noqa: E731
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
    return Mechanism1D(lambda x: np.asarray(x, dtype=float), one, zero, zero, name="identity")


def linear(a):
    return Mechanism1D(
        lambda x: a * np.asarray(x, dtype=float),
        lambda x: a * np.ones_like(np.asarray(x, dtype=float)),
        lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        name=f"linear({a})",
    )


def cube():
    return Mechanism1D(
        lambda x: np.asarray(x, dtype=float) ** 3,
        lambda x: 3 * np.asarray(x, dtype=float) ** 2,
        lambda x: 6 * np.asarray(x, dtype=float),
        lambda x: 6 * np.ones_like(np.asarray(x, dtype=float)),
        name="cube",
    )


def softplus_neg():
    """``g(y) = log(1 + exp(-y))``, the backward mechanism of the invertible pair."""

    def d3(y):
        s = special.expit(y)
        return s * (1 - s) * (1 - 2 * s)

    return Mechanism1D(
        lambda y: np.logaddexp(0.0, -y),
        lambda y: special.expit(y) - 1.0,
        lambda y: special.expit(y) * special.expit(-y),
        d3,
        name="softplus_neg",
    )


def compose(outer, inner):
    """``outer o inner`` with chain-rule derivatives up to third order."""

    def d1(x):
        return outer.d1(inner(x)) * inner.d1(x)

    def d2(x):
        u, u1 = inner(x), inner.d1(x)
        return outer.d2(u) * u1**2 + outer.d1(u) * inner.d2(x)

    def d3(x):
        u, u1, u2 = inner(x), inner.d1(x), inner.d2(x)
        return outer.d3(u) * u1**3 + 3 * outer.d2(u) * u1 * u2 + outer.d1(u) * inner.d3(x)

    return Mechanism1D(lambda x: outer(inner(x)), d1, d2, d3, name=f"{outer.name}o{inner.name}")


def add(a, b):
    return Mechanism1D(
        lambda x: a(x) + b(x),
        lambda x: a.d1(x) + b.d1(x),
        lambda x: a.d2(x) + b.d2(x),
        lambda x: a.d3(x) + b.d3(x),
        name=f"{a.name}+{b.name}",
    )


@dataclass(frozen=True)
class PostAnmSpec:
    """Forward ``Y = f2(f1(X) + N_Y)`` and backward ``X = g2(g1(Y) + N_X)`` maps."""

    f1: Mechanism1D
    f2: Mechanism1D
    g1: Mechanism1D
    g2: Mechanism1D


def _check_monotone(m, grid, label):
    steps = np.diff(m(grid))
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise InvertibilityError(f"{label} ({m.name}) is not strictly monotone on the working grid")


def post_anm_reduce(spec, grid=GRID):
    """Return ``(h_Y, h_X) = (f1 o g2, g1 o f2)``: the additive models on the latent variables."""
    _check_monotone(spec.f2, grid, "f2")
    _check_monotone(spec.g2, grid, "g2")
    return compose(spec.f1, spec.g2), compose(spec.g1, spec.f2)


# Invertible pair -----------------------------------------------------------


class InvertiblePairModel(str, enum.Enum):
    FORWARD = "forward"  # X -> Y, linear mechanism, Gumbel noises
    BACKWARD = "backward"  # Y -> X, nonlinear mechanism


def forward_log_density(x, y):
    g = gumbel_log_density().log_pdf
    return g(np.asarray(y) + np.asarray(x)) + g(np.asarray(x))


def backward_log_density(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return tilde_noise_log_density().log_pdf(x - softplus_neg()(y)) + logistic_log_density().log_pdf(y)


def invertible_pair_spec():
    """The invertible pair as a post-ANM with identity outer maps."""
    return PostAnmSpec(f1=linear(-1.0), f2=identity(), g1=softplus_neg(), g2=identity())


def sample_invertible_pair(direction, n, rng):
    direction = InvertiblePairModel(direction)
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    if direction is InvertiblePairModel.FORWARD:
        x = rng.gumbel(size=n)
        y = -x + rng.gumbel(size=n)
        label = GraphLabel.X_TO_Y
    else:
        y = rng.logistic(size=n)
        # exp(-N~) ~ Gamma(2, 1) has the density exp(-2n - exp(-n)).
        x = np.logaddexp(0.0, -y) - np.log(rng.gamma(2.0, 1.0, size=n))
        label = GraphLabel.Y_TO_X
    values = np.column_stack([standardize(x), standardize(y)])
    return Dataset(values, label, {"scm_class": f"invertible_{direction.value}"})


# Residual checkers ---------------------------------------------------------


def condition19_residual(f, nu, xi, x, y):
    """Left minus right side of the third-order ODE in ``xi`` for the triple ``(f, nu, xi)``.

    ``nu`` terms are evaluated at ``y - f(x)``; ``xi`` and ``f`` terms at ``x``.
    A zero residual everywhere means the additive model is not identifiable.
    """
    n = y - f(x)
    f1, f2, f3 = f.d1(x), f.d2(x), f.d3(x)
    n1, n2, n3 = nu.d1(n), nu.d2(n), nu.d3(n)
    if np.any(np.abs(n2 * f1) < DENOM_TOL):
        raise UndefinedPointError(f"f'(x) * nu''(y - f(x)) vanishes at ({x}, {y})")
    x2, x3 = xi.d2(x), xi.d3(x)
    rhs = (
        x2 * (f2 / f1 - n3 * f1 / n2)
        + n3 * n1 * f2 * f1 / n2
        - n1 * f2**2 / f1
        - 2 * n2 * f2 * f1
        + n1 * f3
    )
    return x3 - rhs


def hx_constraint_residual(spec, xi, nu_y, x, y):
    """``1/h_X'(y)`` minus the value forced on it by the forward model at ``(x, y)``."""
    h_y, h_x = post_anm_reduce(spec)
    n = y - h_y(x)
    hx1 = h_x.d1(y)
    hy1, hy2 = h_y.d1(x), h_y.d2(x)
    n1, n2 = nu_y.d1(n), nu_y.d2(n)
    if np.any(np.abs(hx1) < DENOM_TOL):
        raise UndefinedPointError(f"h_X'(y) vanishes at y={y}")
    if np.any(np.abs(n2 * hy1) < DENOM_TOL):
        raise UndefinedPointError(f"nu_Y'' * h_Y' vanishes at ({x}, {y})")
    return 1.0 / hx1 - (xi.d2(x) + n2 * hy1**2 - n1 * hy2) / (n2 * hy1)


# Oracle reports ------------------------------------------------------------


def _report(check, grid, residual, tol):
    worst = float(np.max(np.abs(residual)))
    return {"check": check, "grid": grid, "max_abs_residual": worst, "pass": bool(worst < tol)}


def example2_oracle(points=100, tol=1e-9):
    g = np.linspace(-5.0, 5.0, points)
    X, Y = np.meshgrid(g, g, indexing="ij")
    res = forward_log_density(X, Y) - backward_log_density(X, Y)
    return _report("example2", {"lo": -5.0, "hi": 5.0, "points": points}, res, tol)


def condition19_oracle(points=20, tol=1e-8):
    g = np.linspace(-3.0, 3.0, points)
    X, Y = np.meshgrid(g, g, indexing="ij")
    gauss, gum = gaussian_log_density(), gumbel_log_density()
    res = np.concatenate(
        [
            condition19_residual(linear(1.0), gauss, gauss, X, Y).ravel(),
            condition19_residual(linear(-1.0), gum, gum, X, Y).ravel(),
        ]
    )
    return _report("condition19", {"lo": -3.0, "hi": 3.0, "points": points}, res, tol)


def hx_constraint_oracle(points=20, tol=1e-6):
    g = np.linspace(-5.0, 5.0, points)
    X, Y = np.meshgrid(g, g, indexing="ij")
    res = hx_constraint_residual(invertible_pair_spec(), gumbel_log_density(), gumbel_log_density(), X, Y)
    return _report("hx_constraint", {"lo": -5.0, "hi": 5.0, "points": points}, res, tol)


ORACLES = {
    "example2": example2_oracle,
    "condition19": condition19_oracle,
    "hx_constraint": hx_constraint_oracle,
}
