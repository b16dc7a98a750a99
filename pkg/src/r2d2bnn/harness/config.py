"""Benchmark configuration files.

YAML, with a mandatory ``version: 1`` marker.  Every field of the training,
prior, and scenario configurations is addressable; unknown keys anywhere are
hard errors so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..inference import TrainConfig
from ..layers import PriorConfig
from .scenarios import SCENARIO_IDS, Scenario

__all__ = ["BenchmarkConfig", "GridSpec", "EmitSpec", "load_config", "ConfigError", "config_to_dict"]

CONFIG_VERSION = 1

PRIORS = ("r2d2", "gaussian", "horseshoe", "spike_slab")
ENGINES = ("svgi", "svi", "sgld")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    priors: tuple = ("r2d2",)
    inference: tuple = ("svgi",)
    depths: tuple = (2,)
    widths: tuple = (32,)
    seeds: tuple = (0, 1, 2, 3, 4)

    def __post_init__(self):
        for p in self.priors:
            if p not in PRIORS:
                raise ConfigError(f"unknown prior {p!r}")
        for e in self.inference:
            if e not in ENGINES:
                raise ConfigError(f"unknown inference engine {e!r}")
        if any(d < 0 for d in self.depths):
            raise ConfigError("depths must be >= 0")
        if any(w < 1 for w in self.widths):
            raise ConfigError("widths must be >= 1")
        if len(self.seeds) < 1:
            raise ConfigError("at least one seed required")


@dataclass(frozen=True)
class EmitSpec:
    densities_k: int = 5
    prediction_dump: bool = True
    figures: bool = True

    def __post_init__(self):
        if self.densities_k < 0:
            raise ConfigError("densities_k must be >= 0")


@dataclass(frozen=True)
class BenchmarkConfig:
    scenario: Scenario
    train: TrainConfig
    prior: PriorConfig
    grid: GridSpec
    emit: EmitSpec
    compute_inference_error: bool = False


def _check_keys(section: dict, allowed, where: str) -> None:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _build(cls, section: dict, where: str, transforms=None):
    names = [f.name for f in dataclasses.fields(cls)]
    _check_keys(section, names, where)
    kwargs = dict(section)
    if transforms:
        for key, fn in transforms.items():
            if key in kwargs:
                kwargs[key] = fn(kwargs[key])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def load_config(path) -> BenchmarkConfig:
    path = Path(path)
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(
        raw,
        ["version", "scenario", "train", "prior", "grid", "emit", "compute_inference_error"],
        "config root",
    )
    if raw.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}, got {raw.get('version')!r}")

    scenario_raw = dict(raw.get("scenario") or {})
    if "id" in scenario_raw:
        aliases = {"s1": "s1_polynomial", "s2": "s2_lowdim", "s3": "s3_highdim"}
        scenario_raw["id"] = aliases.get(scenario_raw["id"], scenario_raw["id"])
    else:
        scenario_raw["id"] = "s1_polynomial"
    scenario = _build(Scenario, scenario_raw, "scenario")
    train = _build(TrainConfig, dict(raw.get("train") or {}), "train")
    prior = _build(PriorConfig, dict(raw.get("prior") or {}), "prior")
    grid = _build(
        GridSpec,
        dict(raw.get("grid") or {}),
        "grid",
        transforms={k: tuple for k in ("priors", "inference", "depths", "widths", "seeds")},
    )
    emit = _build(EmitSpec, dict(raw.get("emit") or {}), "emit")
    return BenchmarkConfig(
        scenario=scenario,
        train=train,
        prior=prior,
        grid=grid,
        emit=emit,
        compute_inference_error=bool(raw.get("compute_inference_error", False)),
    )


def config_to_dict(cfg: BenchmarkConfig) -> dict:
    return {
        "version": CONFIG_VERSION,
        "scenario": dataclasses.asdict(cfg.scenario),
        "train": dataclasses.asdict(cfg.train),
        "prior": dataclasses.asdict(cfg.prior),
        "grid": dataclasses.asdict(cfg.grid),
        "emit": dataclasses.asdict(cfg.emit),
        "compute_inference_error": cfg.compute_inference_error,
    }
