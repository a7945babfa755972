"""A small dense-tensor kernel with reverse-mode differentiation.

Every primitive builds a node holding its inputs and a closure that maps the
output gradient to input gradients. ``backward`` walks the nodes reachable
from a scalar loss in reverse topological order, accumulates ``.grad`` on
every tensor created with ``requires_grad=True`` and then releases the graph.

Broadcasting is limited to trailing-dimension operands (a bias or gain whose
shape is a suffix of the other operand's shape) and Python scalars.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ContractError, ShapeError

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None, op=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, op={self.op})"

    # operators
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward, op):
    parents = tuple(parents)
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, _parents=parents if needs else (), _backward=backward if needs else None, op=op)


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=DTYPE, copy=True)
    else:
        t.grad += g


def _check_trailing(big, small, op):
    if small.shape == () or big.shape[big.ndim - small.ndim :] == small.shape:
        return
    raise ShapeError(f"{op}: shapes {big.shape} and {small.shape} are incompatible (only trailing-dimension broadcasting)")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    g = g.sum(axis=tuple(range(lead))) if lead else g
    if shape == ():
        return np.asarray(g.sum())
    return g


def _binary_operands(a, b, op):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        if a.ndim >= b.ndim:
            _check_trailing(a, b, op)
        else:
            _check_trailing(b, a, op)
    return a, b


# Primitives -----------------------------------------------------------------


def add(a, b):
    a, b = _binary_operands(a, b, "add")
    out = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _node(out, (a, b), backward, "add")


def mul(a, b):
    a, b = _binary_operands(a, b, "mul")
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _node(out, (a, b), backward, "mul")


def matmul(a, b):
    """``(..., m, k) @ (k, n)`` or ``(..., m, k) @ (..., k, n)`` with equal leading dims."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} differ")
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            if b.ndim == 2:
                k, n = b.shape
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                gb = np.swapaxes(a.data, -1, -2) @ g
            _accumulate(b, gb)

    return _node(out, (a, b), backward, "matmul")


def transpose(x, axes=None):
    x = as_tensor(x)
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inverse = tuple(np.argsort(axes))

    def backward(g):
        _accumulate(x, np.transpose(g, inverse))

    return _node(np.transpose(x.data, axes), (x,), backward, "transpose")


def swapaxes(x, a1, a2):
    axes = list(range(as_tensor(x).ndim))
    axes[a1], axes[a2] = axes[a2], axes[a1]
    return transpose(x, axes)


def reshape(x, shape):
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {shape}") from None

    def backward(g):
        _accumulate(x, g.reshape(x.shape))

    return _node(out, (x,), backward, "reshape")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[t.shape for t in tensors]} do not align on axis {axis}") from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                _accumulate(t, np.take(g, np.arange(lo, hi), axis=axis))

    return _node(out, tensors, backward, "concat")


def slice_(x, idx):
    x = as_tensor(x)
    out = x.data[idx]

    def backward(g):
        full = np.zeros(x.shape, dtype=DTYPE)
        if fancy:
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        _accumulate(x, full)

    parts = idx if isinstance(idx, tuple) else (idx,)
    fancy = any(isinstance(i, (list, np.ndarray)) for i in parts)
    return _node(np.array(out, copy=True), (x,), backward, "slice")


def sum_(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _node(out, (x,), backward, "sum")


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    out = x.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g / count, x.shape))

    return _node(out, (x,), backward, "mean")


def softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        _accumulate(x, out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _node(out, (x,), backward, "softmax")


def layer_norm(x, axis=-1, eps=1e-12):
    """Normalize to zero mean and unit (population) variance along ``axis``. No affine part."""
    x = as_tensor(x)
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc**2).mean(axis=axis, keepdims=True) + eps)
    out = xc * inv

    def backward(g):
        gm = g.mean(axis=axis, keepdims=True)
        gy = (g * out).mean(axis=axis, keepdims=True)
        _accumulate(x, inv * (g - gm - out * gy))

    return _node(out, (x,), backward, "layer_norm")


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        _accumulate(x, g * mask)

    return _node(x.data * mask, (x,), backward, "relu")


_SQRT_HALF = np.sqrt(0.5)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x):
    """Exact GELU, ``x * Phi(x)``."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + special.erf(x.data * _SQRT_HALF))

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data**2)
        _accumulate(x, g * (cdf + x.data * pdf))

    return _node(x.data * cdf, (x,), backward, "gelu")


def sigmoid(x):
    x = as_tensor(x)
    out = special.expit(x.data)

    def backward(g):
        _accumulate(x, g * out * (1.0 - out))

    return _node(out, (x,), backward, "sigmoid")


def softplus(x):
    """``log(1 + exp(x))``, computed stably."""
    x = as_tensor(x)

    def backward(g):
        _accumulate(x, g * special.expit(x.data))

    return _node(np.logaddexp(0.0, x.data), (x,), backward, "softplus")


def embedding_lookup(table, indices):
    table = as_tensor(table)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"embedding_lookup: index out of range for table of shape {table.shape}")

    def backward(g):
        full = np.zeros(table.shape, dtype=DTYPE)
        np.add.at(full, idx, g)
        _accumulate(table, full)

    return _node(table.data[idx], (table,), backward, "embedding")


def binary_cross_entropy_with_logits(logits, targets):
    """Summed Bernoulli negative log-likelihood, ``softplus(z) - t * z``."""
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=DTYPE)
    if t.shape != logits.shape:
        raise ShapeError(f"bce: logits {logits.shape} and targets {t.shape} differ")
    return sum_(softplus(logits) - mul(logits, Tensor(t)))


PRIMITIVES = {
    "add": add,
    "mul": mul,
    "matmul": matmul,
    "transpose": transpose,
    "reshape": reshape,
    "concat": concat,
    "slice": slice_,
    "sum": sum_,
    "mean": mean,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "relu": relu,
    "gelu": gelu,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "embedding_lookup": embedding_lookup,
}


# Reverse pass ---------------------------------------------------------------


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        stack.extend((p, False) for p in node._parents if id(p) not in seen)
    return order


def backward(loss):
    """Populate ``.grad`` of every leaf reachable from the scalar ``loss``; the graph is released afterwards."""
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {getattr(loss, 'shape', None)}")
    if loss._backward is None:
        raise ContractError("loss does not depend on any tensor requiring gradients")
    tape = _topological(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    # Interior nodes only carried gradients for the sweep.
    for node in tape:
        if node._backward is not None:
            node.grad = None
            node._parents = ()
            node._backward = None


Tensor.backward = backward


# Gradient checking -----------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict = field(default_factory=dict)
    tol: float = 1e-6

    @property
    def passed(self):
        return bool(self.max_rel_error < self.tol)


def relative_error(analytic, numeric, floor=1e-4):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero entries absolute."""
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def grad_check(f, params, h=1e-5, tol=1e-6, floor=1e-4):
    """Compare reverse-mode gradients of ``f(params) -> scalar Tensor`` with central differences."""
    params = dict(params) if isinstance(params, dict) else {f"p{i}": p for i, p in enumerate(params)}
    for p in params.values():
        p.grad = None
    f(params).backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
    report = GradCheckReport(0.0, tol=tol)
    for k, p in params.items():
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f(params).item()
            flat[i] = orig - h
            down = f(params).item()
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2 * h)
        err = float(relative_error(analytic[k], numeric, floor).max()) if numeric.size else 0.0
        report.per_param[k] = err
        report.max_rel_error = max(report.max_rel_error, err)
    for p in params.values():
        p.grad = None
    return report
