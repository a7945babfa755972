"""Command-line entry point: ``amortcd {generate,train,eval,baseline,oracle,report}``.

Errors are written to stderr as one JSON object and mapped to exit codes
2 (config), 3 (I/O), 4 (numeric) and 5 (contract).
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import baselines, corpus_io, identifiability, realdata
from .config import parse_config
from .errors import AmortCDError, ConfigError, DataIOError, DivergenceError, ParseError
from .evaluation import EvalReport, evaluate, render_grid
from .noise import make_rng
from .presets import SCALES, get_preset
from .scm import generate_corpus
from .train import load_checkpoint, save_checkpoint, train

logger = logging.getLogger("amortcd")


def _workers(args):
    return max(1, args.workers or os.cpu_count() or 1)


def _pool_map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _chunks(seq, k):
    size = max(1, -(-len(seq) // k))
    return [seq[i : i + size] for i in range(0, len(seq), size)]


def _dump(obj, path):
    if path in (None, "-"):
        json.dump(obj, sys.stdout, indent=1)
        sys.stdout.write("\n")
        return
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)


# generate ---------------------------------------------------------------------


def cmd_generate(args):
    if not args.out:
        raise ConfigError("--out is required")
    workers = _workers(args)
    if args.preset:
        preset = get_preset(args.preset)
        seed = args.seed or 0
        written = {}
        for i, run in enumerate(preset.runs):
            corpus = generate_corpus(preset.train_corpus(run), seed + 1000 * i, workers)
            written[f"train/{run}"] = corpus_io.write_corpus(corpus, os.path.join(args.out, "train", run))
        for i, test in enumerate(preset.tests):
            corpus = generate_corpus(preset.test_corpus(test), seed + 1000 * i + 500, workers)
            written[f"test/{test}"] = corpus_io.write_corpus(corpus, os.path.join(args.out, "test", test))
        _dump({"preset": f"{preset.name}@{preset.scale.name}", "manifests": written}, None)
        return 0
    if not args.config:
        raise ConfigError("generate needs --config or --preset")
    cfg = parse_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    corpus = generate_corpus(cfg.corpus, seed, workers)
    path = corpus_io.write_corpus(corpus, args.out)
    _dump({"manifest": path, "n_datasets": len(corpus), "seed": seed}, None)
    return 0


# train ------------------------------------------------------------------------


def _write_curve(ckpt, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_nll", "val_nll"])
        for epoch, tr, va in ckpt.curve:
            w.writerow([epoch, repr(float(tr)), repr(float(va))])


def _corpus_digest(datasets):
    # content hash rather than a path, so identical runs write identical files
    h = hashlib.sha256()
    for d in datasets:
        h.update(d.label.value.encode())
        h.update(np.ascontiguousarray(d.values).tobytes())
    return h.hexdigest()


def cmd_train(args):
    if not (args.corpus and args.out):
        raise ConfigError("train needs --corpus and --out")
    if args.config:
        cfg = parse_config(args.config).train
    elif (args.preset or "desk") in SCALES:
        cfg = SCALES[args.preset or "desk"].train
    else:
        raise ConfigError(f"--preset for train must be one of {sorted(SCALES)}")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    datasets = corpus_io.read_corpus(args.corpus)
    if any(d.label.value == "empty" for d in datasets) and cfg.model.classes != "three_graph":
        cfg = replace(cfg, model=replace(cfg.model, classes="three_graph"))
    ckpt = train(cfg, datasets, log_every=args.log_every)
    ckpt.metadata["corpus_sha256"] = _corpus_digest(datasets)
    save_checkpoint(ckpt, args.out)
    curve = os.path.splitext(args.out)[0] + ".curve.csv"
    _write_curve(ckpt, curve)
    _dump({"checkpoint": args.out, "curve": curve, "best_epoch": ckpt.best_epoch}, None)
    return 0


# eval / baseline ----------------------------------------------------------------


def _predict_chunk(job):
    ckpt_path, values = job
    ckpt = load_checkpoint(ckpt_path)
    out = []
    for v in values:
        p = ckpt.predict(v)
        out.append(p.graph if isinstance(p.graph, str) else p.graph.value)
    return out


def _baseline_chunk(job):
    method, seed, items = job
    out = []
    for i, values in items:
        if method == "random":
            out.append(baselines.random_direction(make_rng(seed, 0xBA5E, i)).value)
        else:
            fn = baselines.linear_direction if method == "linear" else baselines.anm_direction
            out.append(fn(values).graph.value)
    return out


def _is_pairs_dir(path):
    return os.path.isdir(path) and os.path.exists(os.path.join(path, "pairmeta.txt"))


def _load_eval_corpus(path):
    """Synthetic manifest, or a Tuebingen-style directory with pairmeta.txt."""
    if _is_pairs_dir(path):
        pairs, skipped = realdata.load_tuebingen_dir(path)
        logger.info("loaded %d pairs, skipped %d multi-column pairs", len(pairs), len(skipped))
        datasets = [p.as_dataset() for p in pairs]
        for d in datasets:
            d.values = realdata.subsample(d.values, 1500)
        return datasets, [p.weight for p in pairs]
    return corpus_io.read_corpus(path), None


def _finish(args, datasets, weights, predictions, model_id):
    report = evaluate(None, datasets, model_id, corpus_io.corpus_id(args.corpus), args.exact, predictions)
    if weights is not None:
        w = np.asarray(weights, float)
        report.metadata["weighted_mean_shd"] = float(np.dot(report.outcomes, w) / w.sum())
    if args.report:
        report.save(args.report)
    _dump(report.to_json() if not args.report else {k: getattr(report, k) for k in ("mean_shd", "ci_low", "ci_high")}, None)
    return 0


def cmd_eval(args):
    if not (args.model and args.corpus):
        raise ConfigError("eval needs --model and --corpus")
    datasets, weights = _load_eval_corpus(args.corpus)
    load_checkpoint(args.model)  # fail fast on a bad file
    values = [d.values for d in datasets]
    jobs = [(args.model, c) for c in _chunks(values, _workers(args))]
    preds = [p for chunk in _pool_map(_predict_chunk, jobs, _workers(args)) for p in chunk]
    return _finish(args, datasets, weights, preds, os.path.basename(args.model))


def cmd_baseline(args):
    if not args.corpus:
        raise ConfigError("baseline needs --corpus")
    datasets, weights = _load_eval_corpus(args.corpus)
    seed = args.seed or 0
    items = list(enumerate(d.values for d in datasets))
    jobs = [(args.method, seed, c) for c in _chunks(items, _workers(args))]
    preds = [p for chunk in _pool_map(_baseline_chunk, jobs, _workers(args)) for p in chunk]
    return _finish(args, datasets, weights, preds, f"baseline-{args.method}")


# oracle / report ---------------------------------------------------------------


def cmd_oracle(args):
    names = list(identifiability.ORACLES) if args.check == "all" else [args.check]
    results = [identifiability.ORACLES[n]() for n in names]
    _dump(results[0] if len(results) == 1 else results, args.out)
    return 0 if all(r["pass"] for r in results) else 4


def cmd_report(args):
    reports = [EvalReport.load(p) for p in args.reports]
    if not reports:
        raise ConfigError("report needs at least one report file")
    table = render_grid(reports)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(table)
    else:
        sys.stdout.write(table)
    return 0


# entry point ---------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="amortcd", description="Amortized bivariate causal discovery workbench.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *flags):
        for f in flags:
            if f == "--seed":
                sp.add_argument("--seed", type=int, default=None, help="master seed")
            elif f == "--workers":
                sp.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
            else:
                sp.add_argument(f, default=None)

    g = sub.add_parser("generate", help="write a synthetic corpus (manifest + CSV files)")
    common(g, "--config", "--preset", "--out", "--seed", "--workers")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit a model on a corpus")
    common(t, "--config", "--preset", "--corpus", "--out", "--seed")
    t.add_argument("--log-every", type=int, default=0)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a corpus")
    common(e, "--model", "--corpus", "--report", "--workers")
    e.add_argument("--exact", action="store_true", help="Clopper-Pearson interval instead of normal approximation")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("baseline", help="score a classical baseline on a corpus")
    b.add_argument("--method", choices=baselines.METHODS, required=True)
    common(b, "--corpus", "--report", "--seed", "--workers")
    b.add_argument("--exact", action="store_true")
    b.set_defaults(func=cmd_baseline)

    o = sub.add_parser("oracle", help="run a closed-form identifiability check")
    o.add_argument("check", choices=sorted(identifiability.ORACLES) + ["all"])
    common(o, "--out")
    o.set_defaults(func=cmd_oracle)

    r = sub.add_parser("report", help="render EvalReport files as a train x test CSV grid")
    r.add_argument("reports", nargs="+")
    common(r, "--out")
    r.set_defaults(func=cmd_report)
    return p


def _error_payload(exc):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
    if isinstance(exc, ParseError):
        payload.update(row=exc.row, col=exc.col)
    if isinstance(exc, DivergenceError):
        payload["epoch"] = exc.epoch
    return payload


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(message)s")
    try:
        return args.func(args)
    except AmortCDError as exc:
        err = exc
    except realdata.PairSkipped as exc:
        err = DataIOError(str(exc))
    except OSError as exc:
        err = DataIOError(str(exc))
    sys.stderr.write(json.dumps(_error_payload(err)) + "\n")
    return err.exit_code


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
