"""SHD scoring, corpus evaluation with 95% intervals, run pooling and report tables."""

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import ContractError, DataIOError
from .scm import GraphLabel

INVALID = "invalid"
Z95 = float(stats.norm.ppf(0.975))


def _as_adjacency(a):
    if isinstance(a, GraphLabel):
        return a.adjacency
    if isinstance(a, str):
        return GraphLabel(a).adjacency
    arr = np.asarray(a)
    if arr.shape != (2, 2) or not np.all((arr == 0) | (arr == 1)):
        raise ContractError(f"adjacency must be a 2x2 binary matrix, got {arr.tolist()}")
    return arr.astype(int)


def shd(pred, truth):
    """Minimal number of edge insertions, deletions and reversals turning ``pred`` into ``truth``.

    ``pred`` may be a GraphLabel, a 2x2 binary adjacency, or the string ``"invalid"``
    (a decoded graph with no label), which scores 1 against any truth.
    """
    if isinstance(pred, str) and pred == INVALID:
        return 1
    if hasattr(pred, "graph"):
        return shd(pred.graph, truth)
    p, t = _as_adjacency(pred), _as_adjacency(truth)
    cost = int(p[0, 0] != t[0, 0]) + int(p[1, 1] != t[1, 1])
    pp, tp = (p[0, 1], p[1, 0]), (t[0, 1], t[1, 0])
    if pp == tp:
        return cost
    if sum(pp) == 1 and sum(tp) == 1:
        return cost + 1  # one reversal
    return cost + abs(sum(pp) - sum(tp))


def _graph_of(prediction):
    """Reduce a model or baseline output to a GraphLabel or ``"invalid"``."""
    g = getattr(prediction, "graph", prediction)
    if isinstance(g, GraphLabel) or g == INVALID:
        return g
    return GraphLabel(g)


def interval(outcomes, exact=False):
    """Mean and 95% interval of per-dataset SHD values."""
    x = np.asarray(outcomes, dtype=np.float64)
    n = x.size
    mean = float(x.mean())
    if exact:
        k = int(round(x.sum()))
        lo = 0.0 if k == 0 else float(stats.beta.ppf(0.025, k, n - k + 1))
        hi = 1.0 if k == n else float(stats.beta.ppf(0.975, k + 1, n - k))
        return mean, min(lo, mean), max(hi, mean)
    half = Z95 * float(x.std()) / np.sqrt(n)
    return mean, max(0.0, mean - half), min(1.0, mean + half)


@dataclass
class EvalReport:
    model_id: str
    corpus_id: str
    n_datasets: int
    mean_shd: float
    ci_low: float
    ci_high: float
    per_class: dict = field(default_factory=dict)  # class -> {n, mean_shd, ci_low, ci_high}
    invalid_count: int = 0
    outcomes: list = field(default_factory=list)
    classes: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_json(json.load(fh))
        except OSError as exc:
            raise DataIOError(f"cannot read report {path}: {exc}") from None


def build_report(model_id, corpus_id, outcomes, classes, invalid_count=0, exact=False, metadata=None):
    if not outcomes:
        raise ContractError("cannot evaluate an empty corpus")
    mean, lo, hi = interval(outcomes, exact)
    per_class = {}
    for name in sorted(set(classes)):
        sub = [o for o, c in zip(outcomes, classes) if c == name]
        m, l, h = interval(sub, exact)
        per_class[name] = {"n": len(sub), "mean_shd": m, "ci_low": l, "ci_high": h}
    return EvalReport(
        model_id, corpus_id, len(outcomes), mean, lo, hi, per_class, invalid_count,
        [int(o) for o in outcomes], list(classes), dict(metadata or {}),
    )


def evaluate(predictor, datasets, model_id="model", corpus_id="corpus", exact=False, predictions=None):
    """Score ``predictor(dataset)`` on every dataset.

    ``predictions`` may be supplied instead (one per dataset) when they were
    computed elsewhere, e.g. in a worker pool.
    """
    datasets = list(getattr(datasets, "datasets", datasets))
    if not datasets:
        raise ContractError("cannot evaluate an empty corpus")
    if predictions is None:
        predictions = [predictor(d) for d in datasets]
    outcomes, classes, invalid = [], [], 0
    for d, pred in zip(datasets, predictions):
        g = _graph_of(pred)
        invalid += g == INVALID
        outcomes.append(shd(g, d.label))
        classes.append(d.provenance.get("scm_class", "unknown"))
    return build_report(model_id, corpus_id, outcomes, classes, invalid, exact)


def aggregate_runs(reports, exact=False):
    """Pool several seeds' reports on the same corpus into one report."""
    reports = list(reports)
    if not reports:
        raise ContractError("nothing to aggregate")
    ids = {r.corpus_id for r in reports}
    if len(ids) != 1:
        raise ContractError(f"reports come from different corpora: {sorted(ids)}")
    outcomes = [o for r in reports for o in r.outcomes]
    classes = [c for r in reports for c in (r.classes or ["unknown"] * len(r.outcomes))]
    model_id = "+".join(dict.fromkeys(r.model_id for r in reports))
    meta = {"runs": len(reports)}
    return build_report(model_id, reports[0].corpus_id, outcomes, classes,
                        sum(r.invalid_count for r in reports), exact, meta)


def render_grid(reports):
    """CSV table: one row per model (training class), one column per test corpus."""
    models = list(dict.fromkeys(r.model_id for r in reports))
    corpora = list(dict.fromkeys(r.corpus_id for r in reports))
    cell = {(r.model_id, r.corpus_id): r for r in reports}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["train"]
    for c in corpora:
        header += [f"{c}:mean_shd", f"{c}:ci_low", f"{c}:ci_high"]
    w.writerow(header)
    for m in models:
        row = [m]
        for c in corpora:
            r = cell.get((m, c))
            row += ["", "", ""] if r is None else [f"{r.mean_shd:.4f}", f"{r.ci_low:.4f}", f"{r.ci_high:.4f}"]
        w.writerow(row)
    return buf.getvalue()
