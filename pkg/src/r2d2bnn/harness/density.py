"""Posterior weight-density diagnostics.

Identifies the first-layer weights with the smallest posterior-mean
magnitude, draws posterior samples for each, and evaluates a Gaussian-kernel
density estimate on a fixed grid.  The density height at zero is the
shrinkage diagnostic: a sharper spike means the prior concentrates that
weight harder at zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..inference import predict  # noqa: F401  (re-export convenience)
from ..layers import BayesNet
from ..rng import RngState

__all__ = ["DensityDump", "shrinkage_density_dump", "gaussian_kde", "write_density_csv"]

GRID_HALF_WIDTH = 0.5
GRID_POINTS = 257


@dataclass
class DensityDump:
    weight_index: int
    mean: float
    samples: np.ndarray
    bandwidth: float
    grid: np.ndarray
    density: np.ndarray

    @property
    def density_at_zero(self) -> float:
        i = int(np.argmin(np.abs(self.grid)))
        return float(self.density[i])


def gaussian_kde(samples: np.ndarray, grid: np.ndarray, bandwidth: float | None = None):
    """Gaussian-kernel density estimate with Silverman bandwidth by default."""
    s = np.asarray(samples, dtype=float)
    n = s.size
    if bandwidth is None:
        sd = s.std()
        iqr = np.subtract(*np.percentile(s, [75, 25]))
        scale = min(sd, iqr / 1.349) if iqr > 0 else sd
        if scale <= 0:
            scale = max(abs(s).max(), 1e-8)
        bandwidth = 0.9 * scale * n ** (-0.2)
    bandwidth = max(bandwidth, 1e-8)
    z = (grid[:, None] - s[None, :]) / bandwidth
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (n * bandwidth * np.sqrt(2.0 * np.pi))
    return dens, bandwidth


def shrinkage_density_dump(
    model: BayesNet, k_smallest: int, mc_eval_samples: int, rng: RngState
) -> list[DensityDump]:
    """Posterior-sample densities of the k smallest-magnitude first-layer weights."""
    layer = model.layers[0]
    mu_flat = layer.vw.mu.data.ravel()
    if k_smallest < 1 or k_smallest > mu_flat.size:
        raise ValueError(f"k must be in [1, {mu_flat.size}]")
    order = np.argsort(np.abs(mu_flat), kind="mergesort")
    chosen = order[:k_smallest]

    n_w = layer.vw.mu.size
    draws = np.empty((mc_eval_samples, k_smallest))
    for s in range(mc_eval_samples):
        _, _, flat = layer.sample(rng.child(f"dump{s}"))
        draws[s] = flat[:n_w][chosen]

    grid = np.linspace(-GRID_HALF_WIDTH, GRID_HALF_WIDTH, GRID_POINTS)
    dumps = []
    for j, widx in enumerate(chosen):
        dens, bw = gaussian_kde(draws[:, j], grid)
        dumps.append(
            DensityDump(
                weight_index=int(widx),
                mean=float(mu_flat[widx]),
                samples=draws[:, j].copy(),
                bandwidth=float(bw),
                grid=grid,
                density=dens,
            )
        )
    return dumps


def write_density_csv(dumps: list[DensityDump], path) -> None:
    """CSV with one row per grid point per weight (RFC 4180, CRLF)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["weight_index", "weight_mean", "bandwidth", "grid", "density"])
        for d in dumps:
            for g, v in zip(d.grid, d.density):
                writer.writerow(
                    [d.weight_index, f"{d.mean:.10g}", f"{d.bandwidth:.10g}", f"{g:.10g}", f"{v:.10g}"]
                )
