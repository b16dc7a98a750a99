"""Figure rendering for benchmark artifacts.

Every figure is drawn from the delimited dumps the benchmark already wrote
(prediction intervals, weight densities, the aggregate summary), so the CSV
files remain the source of truth and the PNGs are a convenience view.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "render_prediction_figure",
    "render_density_figure",
    "render_summary_figure",
    "render_benchmark_figures",
]

plt.rcParams["figure.dpi"] = 120
plt.rcParams["savefig.bbox"] = "tight"


def _read_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        return {}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def render_prediction_figure(pred_csv, out_png) -> None:
    """Prediction mean and +-2 sd interval against the first input coordinate."""
    cols = _read_csv(Path(pred_csv))
    if not cols:
        return
    x, y, m, s = cols["x0"], cols["y_true"], cols["pred_mean"], cols["pred_sd"]
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(x, y, ".", ms=2, alpha=0.35, color="tab:blue", label="data")
    ax.plot(x, m, "-", color="tab:orange", lw=1.5, label="predictive mean")
    ax.fill_between(x, m - 2 * s, m + 2 * s, color="tab:blue", alpha=0.25, label="+-2 sd")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.legend(loc="best", fontsize=8)
    fig.savefig(out_png)
    plt.close(fig)


def render_density_figure(density_csv, out_png) -> None:
    """Kernel-density curves of the dumped small-magnitude weights."""
    cols = _read_csv(Path(density_csv))
    if not cols:
        return
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    for widx in np.unique(cols["weight_index"]):
        sel = cols["weight_index"] == widx
        ax.plot(cols["grid"][sel], cols["density"][sel], lw=1.2, label=f"w[{int(widx)}]")
    ax.axvline(0.0, color="k", lw=0.6, alpha=0.5)
    ax.set_xlabel("weight value")
    ax.set_ylabel("posterior density")
    ax.legend(loc="best", fontsize=7)
    fig.savefig(out_png)
    plt.close(fig)


def render_summary_figure(summary_csv, out_png) -> None:
    """Bar chart of mean test MSE per grid cell."""
    path = Path(summary_csv)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return
    labels = [r["config"] for r in rows]
    values = [float(r["mean_mse"]) if r["mean_mse"] != "n/a" else np.nan for r in rows]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.8 * len(labels)), 3.2))
    ax.bar(range(len(labels)), values, color="tab:blue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("mean test MSE")
    fig.savefig(out_png)
    plt.close(fig)


def render_benchmark_figures(out_dir: Path, runs, results) -> None:
    out_dir = Path(out_dir)
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    summary = out_dir / "summary.csv"
    if summary.exists():
        render_summary_figure(summary, fig_dir / "summary_mse.png")
    for spec in runs:
        if spec not in results:
            continue
        pred_csv = out_dir / "runs" / f"{spec.run_id}.predictions.csv"
        if pred_csv.exists():
            render_prediction_figure(pred_csv, fig_dir / f"{spec.run_id}.predictions.png")
        dens_csv = out_dir / "runs" / f"{spec.run_id}.density.csv"
        if dens_csv.exists():
            render_density_figure(dens_csv, fig_dir / f"{spec.run_id}.density.png")
