"""Dataset container, CSV format, and the three benchmark datasets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import networks as nw
from .gillespie import corrupt_observations, gillespie_simulate
from .lna import lna_simulate

__all__ = [
    "ObservationModel",
    "Dataset",
    "save_dataset",
    "load_dataset",
    "simulate_lv_dataset",
    "simulate_ar_dataset",
    "simulate_dataset",
]


@dataclass(frozen=True)
class ObservationModel:
    """Diagonal Gaussian observation noise at fixed times."""

    variances: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "variances", np.asarray(self.variances, dtype=float))
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        if np.any(self.variances <= 0):
            raise ValueError("observation variances must be positive")


@dataclass
class Dataset:
    """Observation times and the (T, p) matrix of noisy observations."""

    times: np.ndarray
    observations: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.observations = np.asarray(self.observations, dtype=float)
        if self.observations.ndim != 2 or len(self.times) != len(self.observations):
            raise ValueError("observations must be (T, p) matching times")

    def truncate(self, n_obs: int) -> "Dataset":
        return Dataset(self.times[:n_obs].copy(), self.observations[:n_obs].copy())

    @property
    def n_species(self) -> int:
        return self.observations.shape[1]


def save_dataset(dataset: Dataset, path) -> None:
    p = dataset.n_species
    with open(path, "w") as fh:
        fh.write("t," + ",".join(f"y_{j + 1}" for j in range(p)) + "\n")
        for t, row in zip(dataset.times, dataset.observations):
            fh.write(repr(float(t)) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def load_dataset(path) -> Dataset:
    times, obs = [], []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "t":
            raise ValueError(f"unexpected dataset header in {path}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            times.append(float(parts[0]))
            obs.append([float(v) for v in parts[1:]])
    return Dataset(np.array(times), np.array(obs))


def simulate_lv_dataset(seed: int) -> Dataset:
    """Predator-prey: Gillespie skeleton at integer times on [0, 50] from
    the ground-truth settings, corrupted with sd-8 noise on both species."""
    rng = np.random.default_rng(seed)
    net = nw.lotka_volterra()
    times = np.arange(51, dtype=float)
    skeleton = gillespie_simulate(net, nw.LV_X0, nw.LV_TRUE_NU, 50.0, times, rng)
    ys = corrupt_observations(skeleton, nw.LV_SIGMA**2, rng)
    return Dataset(times, ys)


def simulate_ar_dataset(which: str, seed: int) -> Dataset:
    """Autoregulatory network: LNA-sampled skeleton (matching the model used
    for inference), corrupted with the ground-truth noise levels.
    ``which`` selects 'd1' (101 points on [0, 100]) or 'd2' (201 points on
    [0, 1000])."""
    if which == "d1":
        times = np.linspace(0.0, 100.0, 101)
    elif which == "d2":
        times = np.linspace(0.0, 1000.0, 201)
    else:
        raise ValueError(f"unknown autoregulatory dataset {which!r}")
    rng = np.random.default_rng(seed)
    net = nw.autoregulatory()
    skeleton = lna_simulate(net, nw.AR_X0, nw.AR_TRUE_NU, times, rng)
    ys = corrupt_observations(skeleton, nw.AR_SIGMA**2, rng)
    return Dataset(times, ys)


def simulate_dataset(model: str, seed: int) -> Dataset:
    """Dispatch by dataset id: 'lv', 'ar-d1' or 'ar-d2'."""
    if model == "lv":
        return simulate_lv_dataset(seed)
    if model in ("ar-d1", "ar-d2"):
        return simulate_ar_dataset(model[-2:], seed)
    raise ValueError(f"unknown dataset id {model!r}")
