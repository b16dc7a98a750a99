"""Synthetic regression scenarios and dataset plumbing.

Three generators share the same covariate law (uniform on [-5, 5] per
coordinate) and additive N(0, noise_sd^2) noise:

  * ``s1_polynomial``  y = x^3, scalar input;
  * ``s2_lowdim``      y = x1 x2 + x3 x4, four inputs;
  * ``s3_highdim``     y = f(x) for a fixed two-layer random ReLU perceptron,
                       sixteen inputs; the target network's weights come from
                       a scenario-level constant seed so every replicate fits
                       the same underlying function.

Splits are 80/20 with a seeded shuffle.  Regression targets and inputs are
standardized by train-set statistics; metrics computed through
:meth:`Dataset.destandardize` are on the original scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Scenario", "Dataset", "generate_scenario", "SCENARIO_IDS"]

SCENARIO_IDS = ("s1_polynomial", "s2_lowdim", "s3_highdim")

_S3_WEIGHT_SEED = 0x52D2  # fixed across replicates
_S3_HIDDEN = 16


@dataclass(frozen=True)
class Scenario:
    id: str
    n: int = 10000
    noise_sd: float = 3.0
    input_dim: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.id not in SCENARIO_IDS:
            raise ValueError(f"unknown scenario id {self.id!r}; expected one of {SCENARIO_IDS}")
        if self.n < 10:
            raise ValueError("n must be >= 10")
        if self.noise_sd < 0.0:
            raise ValueError("noise_sd must be >= 0")
        default_dim = {"s1_polynomial": 1, "s2_lowdim": 4, "s3_highdim": 16}[self.id]
        if self.input_dim is None:
            object.__setattr__(self, "input_dim", default_dim)
        else:
            minimum = {"s1_polynomial": 1, "s2_lowdim": 4, "s3_highdim": 1}[self.id]
            if self.input_dim < minimum:
                raise ValueError(f"{self.id} needs input_dim >= {minimum}")


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    x_mean: np.ndarray = field(default=None)
    x_sd: np.ndarray = field(default=None)
    y_mean: float = 0.0
    y_sd: float = 1.0

    def standardized(self):
        """Train/test arrays in standardized space (fit on the train split)."""
        xtr = (self.x_train - self.x_mean) / self.x_sd
        xte = (self.x_test - self.x_mean) / self.x_sd
        ytr = (self.y_train - self.y_mean) / self.y_sd
        yte = (self.y_test - self.y_mean) / self.y_sd
        return xtr, ytr, xte, yte

    def destandardize(self, y_std: np.ndarray) -> np.ndarray:
        return y_std * self.y_sd + self.y_mean


def _s3_network(input_dim: int):
    gen = np.random.default_rng(_S3_WEIGHT_SEED)
    w1 = gen.normal(size=(_S3_HIDDEN, input_dim))
    b1 = gen.normal(size=_S3_HIDDEN)
    w2 = gen.normal(size=(1, _S3_HIDDEN))
    b2 = gen.normal(size=1)
    return w1, b1, w2, b2


def _s3_forward(x: np.ndarray, input_dim: int) -> np.ndarray:
    w1, b1, w2, b2 = _s3_network(input_dim)
    h = np.maximum(x @ w1.T / np.sqrt(input_dim) + b1, 0.0)
    return (h @ w2.T / np.sqrt(_S3_HIDDEN) + b2)[:, 0]


def scenario_mean(scenario: Scenario, x: np.ndarray) -> np.ndarray:
    """Noise-free regression function of a scenario at inputs x."""
    if scenario.id == "s1_polynomial":
        return x[:, 0] ** 3
    if scenario.id == "s2_lowdim":
        return x[:, 0] * x[:, 1] + x[:, 2] * x[:, 3]
    return _s3_forward(x, scenario.input_dim)


def generate_scenario(scenario: Scenario, rng=None) -> Dataset:
    """Generate a scenario dataset with an 80/20 train/test split.

    ``rng`` may be an RngState or anything numpy accepts as a seed; omitted,
    the scenario's own seed is used, which is what makes datasets identical
    across platforms for equal seeds.
    """
    if rng is None:
        gen = np.random.default_rng(scenario.seed)
    elif hasattr(rng, "generator"):
        gen = rng.generator
    else:
        gen = np.random.default_rng(rng)
    x = gen.uniform(-5.0, 5.0, size=(scenario.n, scenario.input_dim))
    noise = gen.normal(0.0, scenario.noise_sd, size=scenario.n) if scenario.noise_sd > 0 else 0.0
    y = scenario_mean(scenario, x) + noise

    order = gen.permutation(scenario.n)
    n_train = int(round(scenario.n * 0.8))
    tr, te = order[:n_train], order[n_train:]
    x_train, y_train = x[tr], y[tr]
    x_test, y_test = x[te], y[te]

    x_sd = x_train.std(axis=0)
    x_sd = np.where(x_sd > 0, x_sd, 1.0)
    y_sd = y_train.std()
    return Dataset(
        x_train=x_train,
        y_train=y_train,
        x_test=x_test,
        y_test=y_test,
        x_mean=x_train.mean(axis=0),
        x_sd=x_sd,
        y_mean=float(y_train.mean()),
        y_sd=float(y_sd if y_sd > 0 else 1.0),
    )
