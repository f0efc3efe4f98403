"""Controlled injection of erroneous attribute values.

Each observed cell is independently selected with the plan's rate; selected
continuous cells are replaced by a uniform draw over the feature's observed
range, selected categorical cells by a uniformly drawn category. Replacement
is pure uniform, so it may coincide with the original value: the effective
corruption rate of a categorical feature is rate * (1 - 1/|categories|).
Missing cells are never touched, labels are never touched.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import CONTINUOUS, Dataset

PROTOCOL_RATES = (0.0, 0.05, 0.10, 0.15, 0.20, 0.40, 0.60)


@dataclass(frozen=True)
class NoisePlan:
    """Corruption rate over observed cells plus the seed that drives it."""

    rate: float
    target: str = "observed-cells"
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"rate must be in [0, 1), got {self.rate}")
        if self.target != "observed-cells":
            raise ValueError(f"unsupported target {self.target!r}")


@dataclass(frozen=True)
class NoiseMask:
    """Binary n x n_features matrix marking which raw cells were corrupted."""

    flags: np.ndarray

    def count(self) -> int:
        return int(self.flags.sum())

    def to_csv(self, path: str, feature_names: list[str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if feature_names is not None:
                writer.writerow(feature_names)
            for row in self.flags:
                writer.writerow([int(v) for v in row])


def effective_rate(rate: float, n_categories: int | None) -> float:
    """Chance a selected cell actually changes value; recorded in run metadata."""
    if n_categories is None:
        return rate  # continuous uniform draws almost surely differ
    return rate * (1.0 - 1.0 / n_categories)


def inject_noise(ds: Dataset, plan: NoisePlan) -> tuple[Dataset, NoiseMask]:
    """Corrupt observed cells of a dataset per the plan.

    Deterministic under plan.seed: cell selection uses one uniform draw per
    cell, then replacement values are drawn column by column in feature
    order. Returns the corrupted dataset (labels carried over unchanged) and
    the mask of corrupted cells, which is always a subset of observed cells.
    """
    rng = np.random.default_rng(plan.seed)
    selected = (rng.random(ds.cells.shape) < plan.rate) & ds.observed
    cells = np.array(ds.cells, dtype=object)
    for j, spec in enumerate(ds.specs):
        rows = np.flatnonzero(selected[:, j])
        if rows.size == 0:
            continue
        if spec.kind == CONTINUOUS:
            lo, hi = spec.observed_min, spec.observed_max
            draws = rng.uniform(lo, hi, size=rows.size)
            for i, v in zip(rows, draws):
                cells[i, j] = float(v)
        else:
            cats = spec.categories or ()
            picks = rng.integers(0, len(cats), size=rows.size)
            for i, p in zip(rows, picks):
                cells[i, j] = cats[p]
    corrupted = Dataset.build(ds.specs, cells, labels=ds.labels)
    return corrupted, NoiseMask(flags=selected.astype(np.int8))
