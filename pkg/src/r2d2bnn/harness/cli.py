"""``bench`` command-line interface.

Subcommands:
  bench run       --config cfg.yaml --out results/    full benchmark grid
  bench scenario  --id s1 --n 10000 --seed 7          emit a dataset CSV
  bench ood       --train imgs.idx --train-labels l.idx --ood other.idx
  bench densities --checkpoint model.bnck --k 5       weight-density dump
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np


def _cmd_run(args):
    from .benchmark import run_benchmark
    from .config import load_config

    cfg = load_config(args.config)
    results = run_benchmark(cfg, args.out)
    print(f"completed {len(results)} runs -> {args.out}")
    summary = Path(args.out) / "summary.csv"
    if summary.exists():
        sys.stdout.write(summary.read_text())
    return 0


def _cmd_scenario(args):
    from .scenarios import Scenario, generate_scenario

    aliases = {"s1": "s1_polynomial", "s2": "s2_lowdim", "s3": "s3_highdim"}
    scenario = Scenario(
        id=aliases.get(args.id, args.id),
        n=args.n,
        noise_sd=args.noise_sd,
        seed=args.seed,
    )
    ds = generate_scenario(scenario)
    out = Path(args.out) if args.out else Path(f"{scenario.id}_n{args.n}_seed{args.seed}.csv")
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        dim = ds.x_train.shape[1]
        writer.writerow([f"x{i}" for i in range(dim)] + ["y", "split"])
        for x, y in zip(ds.x_train, ds.y_train):
            writer.writerow([f"{v:.10g}" for v in x] + [f"{y:.10g}", "train"])
        for x, y in zip(ds.x_test, ds.y_test):
            writer.writerow([f"{v:.10g}" for v in x] + [f"{y:.10g}", "test"])
    print(f"wrote {out}")
    return 0


def _cmd_ood(args):
    from .ood import run_ood_experiment

    metrics = run_ood_experiment(
        args.train,
        args.train_labels,
        args.ood,
        out_dir=args.out,
        n_train=args.n_train,
        n_eval=args.n_eval,
        engine=args.engine,
        seed=args.seed,
    )
    print(json.dumps(metrics, sort_keys=True, indent=2))
    return 0


def _cmd_densities(args):
    from ..checkpoint import load_checkpoint
    from ..rng import RngState
    from .density import shrinkage_density_dump, write_density_csv

    net, header = load_checkpoint(args.checkpoint)
    dumps = shrinkage_density_dump(net, args.k, args.samples, RngState(args.seed, 909))
    out = Path(args.out) if args.out else Path(args.checkpoint).with_suffix(".density.csv")
    write_density_csv(dumps, out)
    print(f"wrote {out}")
    if args.figure:
        from .figures import render_density_figure

        png = out.with_suffix(".png")
        render_density_figure(out, png)
        print(f"wrote {png}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a benchmark grid from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.set_defaults(func=_cmd_run)

    p_sc = sub.add_parser("scenario", help="generate a scenario dataset CSV")
    p_sc.add_argument("--id", required=True, help="s1|s2|s3 or full scenario id")
    p_sc.add_argument("--n", type=int, default=10000)
    p_sc.add_argument("--noise-sd", type=float, default=3.0)
    p_sc.add_argument("--seed", type=int, default=0)
    p_sc.add_argument("--out", default=None)
    p_sc.set_defaults(func=_cmd_scenario)

    p_ood = sub.add_parser("ood", help="train on in-distribution IDX images, score OOD by entropy")
    p_ood.add_argument("--train", required=True, help="in-distribution IDX image file")
    p_ood.add_argument("--train-labels", required=True, help="matching IDX label file")
    p_ood.add_argument("--ood", required=True, help="OOD IDX image file")
    p_ood.add_argument("--out", default=None)
    p_ood.add_argument("--n-train", type=int, default=10000)
    p_ood.add_argument("--n-eval", type=int, default=2000)
    p_ood.add_argument("--engine", choices=["svgi", "svi"], default="svgi")
    p_ood.add_argument("--seed", type=int, default=0)
    p_ood.set_defaults(func=_cmd_ood)

    p_d = sub.add_parser("densities", help="weight-density dump from a checkpoint")
    p_d.add_argument("--checkpoint", required=True)
    p_d.add_argument("--k", type=int, default=5)
    p_d.add_argument("--samples", type=int, default=100)
    p_d.add_argument("--seed", type=int, default=0)
    p_d.add_argument("--out", default=None)
    p_d.add_argument("--figure", action="store_true", help="render a PNG alongside the CSV")
    p_d.set_defaults(func=_cmd_densities)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
