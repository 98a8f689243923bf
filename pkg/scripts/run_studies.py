#!/usr/bin/env python3
"""Hyperparameter studies on the frozen benchmark.

Choose one study:
  pivot_m    sweep the per-class pivot size m over {2, 4, 8, 16}
  sigma      sweep the critic activation over all four kinds
  lambda_mu  grid the two loss weights (pass --values to override)

Each study reuses cached runs when configs repeat, so repeated invocations
are cheap. Heavier weight settings can abort on this benchmark; aborted
cells are left empty in the CSV and the sweep continues.
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from taskadapt.cli import main as cli_main
from run_benchmark import benchmark_config

STUDIES = {
    "pivot_m": ("m", "2,4,8,16"),
    "sigma": ("sigma", "tanh,sigmoid,softplus,relu"),
    "lambda_mu": ("lambda,mu", "0.01,0.05,0.1,0.5,1,5,10"),
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("study", choices=sorted(STUDIES))
    parser.add_argument("--output", default="runs/studies")
    parser.add_argument("--seeds", default="0..2")
    parser.add_argument("--epochs", type=int, default=40)
    parser.add_argument("--values", help="override the default sweep values")
    args = parser.parse_args()

    lo, hi = args.seeds.split("..") if ".." in args.seeds else (args.seeds, args.seeds)
    seeds = list(range(int(lo), int(hi) + 1))
    config = benchmark_config(args.output, seeds, args.epochs)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / f"{args.study}_config.json"
    cfg_path.write_text(json.dumps(config, indent=2, sort_keys=True))

    param, values = STUDIES[args.study]
    return cli_main(["sweep", "--config", str(cfg_path), "--param", param,
                     "--values", args.values or values])


if __name__ == "__main__":
    raise SystemExit(main())
