"""Corpus files on disk: one CSV per dataset plus a JSON manifest."""

import json
import os

import numpy as np

from .errors import DataIOError, ParseError
from .scm import Dataset, GraphLabel

MANIFEST = "manifest.json"
HEADER = "x0,x1"


def write_dataset(values, path):
    # %.17g round-trips every float64 exactly.
    np.savetxt(path, values, fmt="%.17g", delimiter=",", header=HEADER, comments="")


def read_dataset(path):
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataIOError(f"cannot read dataset file {path}: {exc}") from None
    if not lines or lines[0].strip() != HEADER:
        raise DataIOError(f"{path}: expected header {HEADER!r}")
    rows = []
    for r, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 2:
            raise ParseError(f"{path}: expected 2 cells, got {len(cells)}", row=r, col=len(cells))
        row = []
        for c, cell in enumerate(cells, start=1):
            try:
                row.append(float(cell))
            except ValueError:
                raise ParseError(f"{path}: non-numeric cell {cell!r}", row=r, col=c) from None
        rows.append(row)
    return np.array(rows, dtype=np.float64).reshape(-1, 2)


def write_corpus(corpus, out_dir):
    """Write ``corpus`` into ``out_dir``; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = []
    width = max(5, len(str(len(corpus.datasets))))
    for i, d in enumerate(corpus.datasets):
        name = f"ds_{i:0{width}d}.csv"
        write_dataset(d.values, os.path.join(out_dir, name))
        manifest.append({
            "file": name,
            "label": d.label.value,
            "scm_class": d.provenance.get("scm_class", "unknown"),
            "seed": d.provenance.get("seed"),
        })
    path = os.path.join(out_dir, MANIFEST)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1)
    return path


def read_manifest(path):
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST)
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise DataIOError(f"cannot read manifest {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataIOError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(manifest, list):
        raise DataIOError(f"{path}: manifest must be a JSON array")
    for i, entry in enumerate(manifest):
        missing = {"file", "label", "scm_class", "seed"} - set(entry)
        if missing:
            raise DataIOError(f"{path}: entry {i} lacks {sorted(missing)}")
    return path, manifest


def read_corpus(path):
    """Load every dataset listed in a manifest (file or directory)."""
    path, manifest = read_manifest(path)
    base = os.path.dirname(os.path.abspath(path))
    datasets = []
    for entry in manifest:
        file = os.path.join(base, entry["file"])
        if not os.path.exists(file):
            raise DataIOError(f"missing dataset file {file}")
        try:
            label = GraphLabel(entry["label"])
        except ValueError:
            raise DataIOError(f"{file}: unknown label {entry['label']!r}") from None
        prov = {"scm_class": entry["scm_class"], "seed": entry["seed"], "file": entry["file"]}
        datasets.append(Dataset(read_dataset(file), label, prov))
    return datasets


def corpus_id(path):
    """Stable identifier for a corpus on disk: its directory name."""
    path = os.path.abspath(path)
    if not os.path.isdir(path):
        path = os.path.dirname(path)
    return os.path.basename(path)
