"""Desk-scale rerun of the study's main comparisons.

Trains (or loads from the cache) the CSIvA models the acceptance suite uses
and prints a train x test grid of mean SHD. A cold cache costs several hours
of single-core CPU time; set AMORTCD_CACHE to choose where models are stored.

    python3 demos/desk_study.py            # full grid
    python3 demos/desk_study.py --quick    # only the linear-uniform model
"""

import argparse
import logging

from amortcd import experiments as ex
from amortcd.evaluation import render_grid

MECH = ("linear-mlp", "nonlinear-mlp", "pnl-mlp")
INV = (("invertible_forward", 0.5), ("invertible_backward", 0.5))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    reports = [ex.baseline_report("random", "linear-uniform"), ex.model_report("linear-uniform", "linear-uniform")]
    if not args.quick:
        reports.append(ex.model_report("linear-gaussian", "linear-gaussian"))
        reports.append(ex.model_report("invertible_forward", "invertible_forward"))
        reports.append(ex.model_report(INV, INV))
        for train in MECH + (tuple((m, 1 / 3) for m in MECH),):
            reports.extend(ex.model_report(train, test) for test in MECH)
    print(render_grid(reports))


if __name__ == "__main__":
    main()
