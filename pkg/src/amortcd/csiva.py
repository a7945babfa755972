"""Alternating-attention encoder / autoregressive decoder mapping a dataset to an adjacency matrix.

Shapes: a batch of ``B`` datasets with ``n`` samples over ``d = 2`` nodes is
embedded to ``(B, n + 1, d, E)``; row ``n`` is a learned summary token. The
encoder alternates attention across the ``d`` nodes of each row and across
the ``n + 1`` rows of each node. Per-node summaries ``(B, d, H)`` condition a
causal decoder over the ``d * d`` adjacency entries in row-major order.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError
from .scm import GraphLabel

START_TOKEN = 2
LN_EPS = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 32
    hidden_dim: int = 32
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    value_mlp_hidden: int = 16
    max_nodes: int = 2
    classes: str = "two_graph"  # or "three_graph" (adds the empty graph)
    ff_mult: int = 2

    def __post_init__(self):
        E, H = self.embed_dim, self.hidden_dim
        if min(self.enc_layers, self.dec_layers, self.heads, self.value_mlp_hidden, self.ff_mult) < 1:
            raise ConfigError("layer, head and hidden counts must be positive")
        if E % 2 or E % self.heads or H % self.heads:
            raise ConfigError(f"embed_dim {E} must be even and, like hidden_dim {H}, divisible by heads {self.heads}")
        if self.max_nodes != 2:
            raise ConfigError("only bivariate graphs (max_nodes = 2) are supported")
        if self.classes not in ("two_graph", "three_graph"):
            raise ConfigError(f"classes must be two_graph or three_graph, got {self.classes!r}")

    @classmethod
    def paper(cls):
        """The full-size configuration (hidden 64, 8 + 8 layers, 8 heads)."""
        return cls(embed_dim=64, hidden_dim=64, enc_layers=8, dec_layers=8, heads=8)

    @classmethod
    def tiny(cls):
        return cls(embed_dim=8, hidden_dim=8, enc_layers=1, dec_layers=1, heads=2, value_mlp_hidden=4)

    def to_json(self):
        return asdict(self)


# Parameters ------------------------------------------------------------------


def _xavier(rng, fan_in, fan_out, shape=None):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))


def init_params(cfg, rng):
    """Xavier-uniform weights, zero biases, unit layer-norm gains."""
    E, H = cfg.embed_dim, cfg.hidden_dim
    half, V, F = E // 2, cfg.value_mlp_hidden, cfg.ff_mult
    d2 = cfg.max_nodes**2
    p = {}

    def lin(name, fin, fout):
        p[f"{name}.w"] = _xavier(rng, fin, fout)
        p[f"{name}.b"] = np.zeros(fout)

    def norm(name, dim):
        p[f"{name}.g"] = np.ones(dim)
        p[f"{name}.b"] = np.zeros(dim)

    def attn(name, dq, dkv):
        lin(f"{name}.q", dq, dq)
        lin(f"{name}.k", dkv, dq)
        lin(f"{name}.v", dkv, dq)
        lin(f"{name}.o", dq, dq)

    def mlp(name, dim):
        lin(f"{name}.fc1", dim, F * dim)
        lin(f"{name}.fc2", F * dim, dim)

    lin("embed.v1", 1, V)
    lin("embed.v2", V, half)
    p["embed.summary"] = _xavier(rng, 1, half, (half,))
    for i in range(cfg.enc_layers):
        pre = f"enc{i}"
        for part in ("attr", "samp"):
            norm(f"{pre}.{part}.ln", E)
            attn(f"{pre}.{part}.attn", E, E)
            norm(f"{pre}.{part}.ln_ff", E)
            mlp(f"{pre}.{part}.ff", E)
    norm("enc.ln_out", E)
    lin("sum.q", E, E)
    lin("sum.k", E, E)
    lin("sum.v", E, E)
    lin("sum.o", E, H)
    p["dec.tokens"] = _xavier(rng, 3, H, (3, H))
    p["dec.pos"] = _xavier(rng, d2, H, (d2, H))
    for i in range(cfg.dec_layers):
        pre = f"dec{i}"
        norm(f"{pre}.ln_self", H)
        attn(f"{pre}.self", H, H)
        norm(f"{pre}.ln_cross", H)
        attn(f"{pre}.cross", H, H)
        norm(f"{pre}.ln_ff", H)
        mlp(f"{pre}.ff", H)
    norm("dec.ln_out", H)
    lin("head", H, 1)
    return {k: T.Tensor(v, requires_grad=True, name=k) for k, v in p.items()}


def n_parameters(params):
    return int(sum(t.data.size for t in params.values()))


# Building blocks ---------------------------------------------------------------


def _linear(p, name, x):
    return x @ p[f"{name}.w"] + p[f"{name}.b"]


def _norm(p, name, x):
    return T.layer_norm(x, eps=LN_EPS) * p[f"{name}.g"] + p[f"{name}.b"]


def _mlp(p, name, x):
    return _linear(p, f"{name}.fc2", T.gelu(_linear(p, f"{name}.fc1", x)))


def attention(p, name, xq, xkv, heads, mask=None):
    """Multi-head attention over ``(S, Lq, D)`` queries and ``(S, Lk, D)`` keys/values."""
    S, Lq, D = xq.shape
    Lk = xkv.shape[1]
    dh = D // heads
    q = _linear(p, f"{name}.q", xq) * (1.0 / np.sqrt(dh))
    q = q.reshape(S, Lq, heads, dh).transpose(0, 2, 1, 3)
    k = _linear(p, f"{name}.k", xkv).reshape(S, Lk, heads, dh).transpose(0, 2, 3, 1)
    v = _linear(p, f"{name}.v", xkv).reshape(S, Lk, heads, dh).transpose(0, 2, 1, 3)
    scores = q @ k
    if mask is not None:
        scores = scores + mask
    a = T.softmax(scores, axis=-1)
    o = (a @ v).transpose(0, 2, 1, 3).reshape(S, Lq, D)
    return _linear(p, f"{name}.o", o)


def sinusoidal(positions, dim):
    """Standard transformer positional code, shape ``(positions, dim)``."""
    pos = np.arange(positions)[:, None]
    rates = 1.0 / 10000 ** (np.arange(0, dim, 2) / dim)
    out = np.zeros((positions, dim))
    out[:, 0::2] = np.sin(pos * rates)
    out[:, 1::2] = np.cos(pos * rates)[:, : dim // 2]
    return out


def _values(data):
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[-1] != 2:
        raise ContractError(f"expected (n, 2) or (B, n, 2) observations, got shape {x.shape}")
    if x.shape[1] == 0:
        raise ContractError("dataset has no observations")
    return x


# Forward pieces -------------------------------------------------------------------


def embed(params, cfg, data):
    """``(B, n, 2)`` values to ``(B, n + 1, 2, E)`` embeddings; row ``n`` is the summary token."""
    x = _values(data)
    B, n, d = x.shape
    half = cfg.embed_dim // 2
    h = T.gelu(_linear(params, "embed.v1", T.Tensor(x[..., None])))
    vals = _linear(params, "embed.v2", h)
    summary = T.Tensor(np.zeros((B, 1, d, half))) + params["embed.summary"]
    vals = T.concat([vals, summary], axis=1)
    ident = np.broadcast_to(sinusoidal(d, half), (B, n + 1, d, half))
    return T.concat([vals, T.Tensor(ident)], axis=-1)


def encoder_forward(params, cfg, emb):
    B, R, d, E = emb.shape
    x = emb
    for i in range(cfg.enc_layers):
        pre = f"enc{i}"
        # attention between attributes: sequences over the d nodes of each row
        h = _norm(params, f"{pre}.attr.ln", x).reshape(B * R, d, E)
        x = x + attention(params, f"{pre}.attr.attn", h, h, cfg.heads).reshape(B, R, d, E)
        x = x + _mlp(params, f"{pre}.attr.ff", _norm(params, f"{pre}.attr.ln_ff", x))
        # attention between samples: sequences over the rows of each node
        h = _norm(params, f"{pre}.samp.ln", x).transpose(0, 2, 1, 3).reshape(B * d, R, E)
        o = attention(params, f"{pre}.samp.attn", h, h, cfg.heads)
        x = x + o.reshape(B, d, R, E).transpose(0, 2, 1, 3)
        x = x + _mlp(params, f"{pre}.samp.ff", _norm(params, f"{pre}.samp.ln_ff", x))
    return _norm(params, "enc.ln_out", x)


def summarize(params, cfg, encoded, return_weights=False):
    """Per-node summary ``(B, d, H)``: the summary row queries the node's sample rows."""
    B, R, d, E = encoded.shape
    n, heads = R - 1, cfg.heads
    dh = E // heads
    q = _linear(params, "sum.q", encoded[:, n]) * (1.0 / np.sqrt(dh))  # (B, d, E)
    q = q.reshape(B, d, heads, 1, dh)
    rows = encoded[:, :n].transpose(0, 2, 1, 3)  # (B, d, n, E)
    k = _linear(params, "sum.k", rows).reshape(B, d, n, heads, dh).transpose(0, 1, 3, 4, 2)
    v = _linear(params, "sum.v", rows).reshape(B, d, n, heads, dh).transpose(0, 1, 3, 2, 4)
    w = T.softmax(q @ k, axis=-1)  # (B, d, heads, 1, n)
    s = _linear(params, "sum.o", (w @ v).reshape(B, d, E))
    return (s, w) if return_weights else s


def _causal_mask(L):
    m = np.triu(np.full((L, L), -1e30), k=1)
    return T.Tensor(m)


def decoder_logits(params, cfg, s, tokens):
    """Logits for each position given the input token prefix ``(B, L)`` (teacher forcing)."""
    tokens = np.asarray(tokens, dtype=np.int64)
    B, L = tokens.shape
    H = cfg.hidden_dim
    x = T.embedding_lookup(params["dec.tokens"], tokens) + params["dec.pos"][:L]
    mask = _causal_mask(L)
    for i in range(cfg.dec_layers):
        pre = f"dec{i}"
        h = _norm(params, f"{pre}.ln_self", x)
        x = x + attention(params, f"{pre}.self", h, h, cfg.heads, mask)
        h = _norm(params, f"{pre}.ln_cross", x)
        x = x + attention(params, f"{pre}.cross", h, s, cfg.heads)
        x = x + _mlp(params, f"{pre}.ff", _norm(params, f"{pre}.ln_ff", x))
    x = _norm(params, "dec.ln_out", x)
    return _linear(params, "head", x).reshape(B, L)


def teacher_tokens(targets):
    t = np.asarray(targets, dtype=np.int64)
    return np.concatenate([np.full((t.shape[0], 1), START_TOKEN), t[:, :-1]], axis=1)


def _targets(target, cfg):
    t = np.asarray(target)
    if t.ndim == 1 or (t.ndim == 2 and t.shape == (cfg.max_nodes, cfg.max_nodes)):
        t = t.reshape(1, -1)
    t = t.reshape(t.shape[0], -1)
    if t.shape[1] != cfg.max_nodes**2:
        raise ContractError(f"target must have {cfg.max_nodes ** 2} entries per graph, got {t.shape[1]}")
    if not np.isin(t, (0, 1)).all():
        raise ContractError("target adjacency must be binary")
    return t


def decode_nll(params, cfg, s, target):
    """Bernoulli NLL summed over entries, averaged over the batch."""
    t = _targets(target, cfg)
    logits = decoder_logits(params, cfg, s, teacher_tokens(t))
    return T.binary_cross_entropy_with_logits(logits, t) * (1.0 / t.shape[0])


def forward_nll(params, cfg, data, target):
    emb = embed(params, cfg, data)
    return decode_nll(params, cfg, summarize(params, cfg, encoder_forward(params, cfg, emb)), target)


def label_targets(labels):
    return np.stack([GraphLabel(lab).adjacency.reshape(-1) for lab in labels])


# Inference ---------------------------------------------------------------------


@dataclass
class AdjacencyPrediction:
    probs: np.ndarray  # (d*d,)
    adjacency: np.ndarray  # (d, d)
    graph: object  # GraphLabel or "invalid"

    @property
    def valid(self):
        return self.graph != "invalid"


def greedy_decode(params, cfg, s):
    """Four sequential Bernoulli decisions per dataset, feeding back thresholded bits."""
    B = s.shape[0]
    d2 = cfg.max_nodes**2
    tokens = np.full((B, 1), START_TOKEN)
    probs = np.zeros((B, d2))
    bits = np.zeros((B, d2), dtype=np.int64)
    for step in range(d2):
        logits = decoder_logits(params, cfg, s, tokens).data[:, step]
        probs[:, step] = 1.0 / (1.0 + np.exp(-logits))
        bits[:, step] = (logits > 0).astype(np.int64)
        tokens = np.concatenate([tokens, bits[:, step : step + 1]], axis=1)
    return probs, bits


def predict_batch(params, cfg, data):
    x = _values(data)
    s = summarize(params, cfg, encoder_forward(params, cfg, embed(params, cfg, x)))
    s = T.Tensor(s.data)
    probs, bits = greedy_decode(params, cfg, s)
    out = []
    for p, b in zip(probs, bits):
        adj = b.reshape(cfg.max_nodes, cfg.max_nodes)
        label = GraphLabel.from_adjacency(adj)
        out.append(AdjacencyPrediction(p, adj, label if label is not None else "invalid"))
    return out


def predict(params, cfg, dataset):
    values = dataset.values if hasattr(dataset, "values") else dataset
    return predict_batch(params, cfg, values)[0]
