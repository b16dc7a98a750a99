"""Benchmark grid execution and result emission.

Runs the (prior x inference x depth x width x seed) grid of a benchmark
configuration, one independent single-threaded training run per cell, and
emits:

  * per-run JSON result files plus line-delimited JSON epoch logs,
  * an aggregated RFC 4180 CSV (means over seeds, rows sorted by config key),
  * plot-ready density and prediction-interval CSV dumps,
  * matplotlib figures rendered from exactly those dumps (optional).

Runs execute in a process pool capped by the BENCH_THREADS environment
variable; failures are recorded per run and the rest of the grid continues.
Aggregation is order-stable, so a rerun with the same config produces
byte-identical CSV output.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..inference import (
    PointNet,
    TrainConfig,
    TrainData,
    hmc_oracle,
    inference_error,
    predict,
    train_sgld,
    train_svgi,
    train_svi,
)
from ..layers import BayesNet, PriorConfig, mlp_arch
from ..rng import RngState
from .config import BenchmarkConfig, config_to_dict
from .density import shrinkage_density_dump, write_density_csv
from .metrics import RunResult, mse
from .scenarios import Scenario, generate_scenario

__all__ = ["run_benchmark", "execute_run", "RunSpec"]


@dataclasses.dataclass(frozen=True)
class RunSpec:
    prior: str
    inference: str
    depth: int
    width: int
    seed: int

    @property
    def key(self) -> str:
        return f"{self.prior}-{self.inference}-L{self.depth}-w{self.width}"

    @property
    def run_id(self) -> str:
        return f"{self.key}-seed{self.seed}"


def _runs_of(cfg: BenchmarkConfig) -> list[RunSpec]:
    grid = cfg.grid
    runs = [
        RunSpec(p, e, d, w, s)
        for p in grid.priors
        for e in grid.inference
        for d in grid.depths
        for w in grid.widths
        for s in grid.seeds
    ]
    return sorted(runs, key=lambda r: (r.key, r.seed))


def execute_run(cfg: BenchmarkConfig, spec: RunSpec, out_dir: Path | None = None):
    """One benchmark cell: train, evaluate, and optionally dump artifacts.

    Returns (RunResult, payload) where payload carries the in-memory pieces
    the aggregate step needs (predictive stats, density heights).
    """
    scenario = dataclasses.replace(cfg.scenario, seed=cfg.scenario.seed + spec.seed)
    dataset = generate_scenario(scenario)
    xtr, ytr, xte, yte = dataset.standardized()
    data = TrainData(xtr, ytr[:, None], task="regression", obs_var=1.0)
    train_cfg = dataclasses.replace(cfg.train, seed=cfg.train.seed + spec.seed)
    prior_cfg = dataclasses.replace(cfg.prior, family=spec.prior)
    arch = mlp_arch(scenario.input_dim, spec.depth, spec.width)

    log_rows = []
    metrics: dict = {}
    payload: dict = {}

    if spec.inference == "sgld":
        model = PointNet(arch, prior_cfg, RngState(train_cfg.seed, 101))
        model, samples = train_sgld(model, data, train_cfg, RngState(train_cfg.seed, 202))
        outs = []
        for theta in samples.samples:
            model.set_flat(theta)
            outs.append(model.forward(xte).data[:, 0])
        stack = np.stack(outs, axis=0)
        mean_std = stack.mean(axis=0)
        var_std = stack.var(axis=0)
        learned_mean = samples.mean
    else:
        model = BayesNet(arch, prior_cfg, RngState(train_cfg.seed, 101))
        trainer = train_svgi if spec.inference == "svgi" else train_svi
        model, reports = trainer(model, data, train_cfg, RngState(train_cfg.seed, 202))
        log_rows = [r.to_dict() for r in reports]
        mean_std, var_std, _ = predict(
            model, xte, train_cfg.mc_eval_samples, RngState(train_cfg.seed, 303)
        )
        mean_std, var_std = mean_std[:, 0], var_std[:, 0]
        learned_mean = np.concatenate(
            [np.concatenate([l.vw.flat_mu() for l in model.layers])]
        )

    pred = dataset.destandardize(mean_std)
    metrics["mse"] = mse(pred, dataset.y_test)
    metrics["mean_predictive_sd"] = float(np.mean(np.sqrt(var_std)) * dataset.y_sd)

    if cfg.compute_inference_error and spec.depth == 0 and spec.inference != "sgld":
        oracle = hmc_oracle(arch, prior_cfg, data, train_cfg, RngState(train_cfg.seed, 404))
        metrics["inference_error"] = inference_error(learned_mean, oracle)

    result = RunResult(
        config={
            "prior": spec.prior,
            "inference": spec.inference,
            "depth": spec.depth,
            "width": spec.width,
            "scenario": scenario.id,
            "n": scenario.n,
        },
        metrics=metrics,
        seed=spec.seed,
    )
    result.validate()

    if out_dir is not None:
        run_dir = out_dir / "runs"
        run_dir.mkdir(parents=True, exist_ok=True)
        log_path = run_dir / f"{spec.run_id}.epochs.jsonl"
        with open(log_path, "w") as fh:
            for row in log_rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        result.log_path = str(log_path)
        with open(run_dir / f"{spec.run_id}.json", "w") as fh:
            json.dump(
                {"config": result.config, "metrics": result.metrics, "seed": result.seed},
                fh,
                sort_keys=True,
                indent=2,
            )
        if cfg.emit.prediction_dump and spec.inference != "sgld":
            _write_prediction_dump(
                out_dir, spec, dataset, mean_std, var_std
            )
        if cfg.emit.densities_k and spec.inference != "sgld":
            dumps = shrinkage_density_dump(
                model, min(cfg.emit.densities_k, model.layers[0].vw.count - model.layers[0].vw.mu_bias.size),
                train_cfg.mc_eval_samples,
                RngState(train_cfg.seed, 505),
            )
            write_density_csv(dumps, out_dir / "runs" / f"{spec.run_id}.density.csv")
            payload["density_at_zero"] = dumps[0].density_at_zero

    return result, payload


def _write_prediction_dump(out_dir: Path, spec: RunSpec, dataset, mean_std, var_std) -> None:
    path = out_dir / "runs" / f"{spec.run_id}.predictions.csv"
    pred = dataset.destandardize(mean_std)
    sd = np.sqrt(var_std) * dataset.y_sd
    order = np.argsort(dataset.x_test[:, 0], kind="mergesort")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x0", "y_true", "pred_mean", "pred_sd"])
        for i in order:
            writer.writerow(
                [
                    f"{dataset.x_test[i, 0]:.10g}",
                    f"{dataset.y_test[i]:.10g}",
                    f"{pred[i]:.10g}",
                    f"{sd[i]:.10g}",
                ]
            )


def _worker(args):
    cfg, spec, out_dir = args
    try:
        result, payload = execute_run(cfg, spec, out_dir)
        return spec, result, payload, None
    except Exception:
        return spec, None, None, traceback.format_exc()


def run_benchmark(cfg: BenchmarkConfig, out_dir) -> list[RunResult]:
    """Execute the full grid and write all artifacts under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.json", "w") as fh:
        json.dump(config_to_dict(cfg), fh, sort_keys=True, indent=2)

    runs = _runs_of(cfg)
    max_workers = int(os.environ.get("BENCH_THREADS", "0")) or min(len(runs), os.cpu_count() or 1)
    results: dict[RunSpec, RunResult] = {}
    payloads: dict[RunSpec, dict] = {}
    failures: dict[RunSpec, str] = {}

    if max_workers <= 1:
        outcomes = map(_worker, [(cfg, spec, out_dir) for spec in runs])
    else:
        pool = ProcessPoolExecutor(max_workers=max_workers)
        outcomes = pool.map(_worker, [(cfg, spec, out_dir) for spec in runs])

    for spec, result, payload, error in outcomes:
        if error is not None:
            failures[spec] = error
        else:
            results[spec] = result
            payloads[spec] = payload
    if max_workers > 1:
        pool.shutdown()

    if failures:
        with open(out_dir / "failures.log", "w") as fh:
            for spec, err in sorted(failures.items(), key=lambda kv: kv[0].run_id):
                fh.write(f"=== {spec.run_id}\n{err}\n")

    _write_aggregate_csv(out_dir / "summary.csv", runs, results)

    if cfg.emit.figures:
        from . import figures

        figures.render_benchmark_figures(out_dir, runs, results)

    return [results[s] for s in runs if s in results]


def _write_aggregate_csv(path: Path, runs, results) -> None:
    """Mean metrics over seeds per grid cell, sorted by config key."""
    groups: dict[str, list[RunResult]] = {}
    for spec in runs:
        if spec in results:
            groups.setdefault(spec.key, []).append(results[spec])
    metric_names = ["mse", "mean_predictive_sd", "inference_error"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["config", "prior", "inference", "depth", "width", "n_seeds"]
            + [f"mean_{m}" for m in metric_names]
        )
        for key in sorted(groups):
            rows = groups[key]
            c = rows[0].config
            agg = []
            for m in metric_names:
                vals = [r.metrics[m] for r in rows if r.metrics.get(m) is not None]
                agg.append(f"{np.mean(vals):.10g}" if vals else "n/a")
            writer.writerow(
                [key, c["prior"], c["inference"], c["depth"], c["width"], len(rows)] + agg
            )
