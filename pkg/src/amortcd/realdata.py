"""Loader for Tuebingen-style cause-effect pairs.

A pair is a whitespace-delimited numeric file plus one metadata row
``id cause_start cause_end effect_start effect_end weight`` (1-based columns).
Only pairs whose cause and effect are single columns are loaded.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataIOError, ParseError
from .noise import make_rng, standardize
from .scm import Dataset, GraphLabel


class PairSkipped(Exception):
    """Signal that a pair is outside the bivariate protocol (multi-column variables)."""


@dataclass(frozen=True)
class PairMeta:
    pair_id: str
    cause: tuple
    effect: tuple
    weight: float

    @classmethod
    def parse(cls, row):
        fields = row.split()
        if len(fields) != 6:
            raise ParseError(f"metadata row needs 6 fields, got {len(fields)}: {row!r}", row=1, col=len(fields))
        try:
            cs, ce, es, ee = (int(f) for f in fields[1:5])
        except ValueError:
            raise ParseError(f"non-integer column index in metadata row {row!r}", row=1) from None
        try:
            weight = float(fields[5])
        except ValueError:
            raise ParseError(f"non-numeric weight in metadata row {row!r}", row=1, col=6) from None
        return cls(fields[0], (cs, ce), (es, ee), weight)


@dataclass
class TuebingenPair:
    values: np.ndarray
    truth: GraphLabel
    weight: float
    pair_id: str = ""
    metadata: dict = field(default_factory=dict)

    def as_dataset(self):
        return Dataset(self.values, self.truth, {"scm_class": "tuebingen", "pair_id": self.pair_id})


def _parse_table(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise DataIOError(f"cannot read pair file {path}: {exc}") from None
    rows = []
    for r, line in enumerate(text.splitlines(), start=1):
        cells = line.split()
        if not cells:
            continue
        if len(cells) < 2:
            raise ParseError(f"{path}: row {r} has fewer than two columns", row=r, col=len(cells))
        row = []
        for c, cell in enumerate(cells[:2], start=1):
            try:
                row.append(float(cell))
            except ValueError:
                raise ParseError(f"{path}: non-numeric cell {cell!r} at row {r}, column {c}", row=r, col=c) from None
        rows.append(row)
    if not rows:
        raise DataIOError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def load_tuebingen_pair(data_file, meta_row):
    """Parse one pair. Raises PairSkipped for multi-column cause or effect."""
    meta = meta_row if isinstance(meta_row, PairMeta) else PairMeta.parse(meta_row)
    if meta.cause[0] != meta.cause[1] or meta.effect[0] != meta.effect[1]:
        raise PairSkipped(f"pair {meta.pair_id} has a multi-column variable")
    raw = _parse_table(data_file)
    values = np.column_stack([standardize(raw[:, 0]), standardize(raw[:, 1])]) if len(raw) > 1 else raw
    truth = GraphLabel.X_TO_Y if meta.cause[0] == 1 else GraphLabel.Y_TO_X
    return TuebingenPair(values, truth, meta.weight, meta.pair_id, {"file": os.fspath(data_file)})


def load_tuebingen_dir(directory, meta_file="pairmeta.txt", pattern="pair{id}.txt"):
    """Load every single-column pair listed in ``meta_file``; returns (pairs, skipped ids)."""
    meta_path = os.path.join(directory, meta_file)
    try:
        with open(meta_path) as fh:
            rows = [line for line in fh.read().splitlines() if line.strip()]
    except OSError as exc:
        raise DataIOError(f"cannot read {meta_path}: {exc}") from None
    pairs, skipped = [], []
    for line in rows:
        meta = PairMeta.parse(line)
        try:
            pairs.append(load_tuebingen_pair(os.path.join(directory, pattern.format(id=meta.pair_id)), meta))
        except PairSkipped:
            skipped.append(meta.pair_id)
    return pairs, skipped


def subsample(values, max_rows, seed=0):
    """Deterministic row subsample; attention cost grows with n squared."""
    if len(values) <= max_rows:
        return values
    idx = np.sort(make_rng(seed, 0x7B).choice(len(values), size=max_rows, replace=False))
    return values[idx]


def evaluate_pairs(predictor, pairs, max_rows=1500, seed=0):
    """Weighted and unweighted mean SHD of ``predictor`` over real pairs."""
    from .evaluation import shd

    if not pairs:
        raise DataIOError("no pairs to evaluate")
    scores, weights = [], []
    for p in pairs:
        d = Dataset(subsample(p.values, max_rows, seed), p.truth, {"pair_id": p.pair_id})
        scores.append(shd(predictor(d), p.truth))
        weights.append(p.weight)
    scores, weights = np.array(scores, float), np.array(weights, float)
    return {
        "n_pairs": len(pairs),
        "unweighted_mean_shd": float(scores.mean()),
        "weighted_mean_shd": float(np.sum(scores * weights) / np.sum(weights)),
    }
