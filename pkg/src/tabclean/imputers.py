"""Reference imputers: mean, median, kNN, SoftImpute, MICE-lite, MIDA.

All baselines consume an encoded [0, 1] matrix with its observation mask and
return a complete matrix that agrees with the input exactly on observed
cells. Lower-level entry points (soft_impute, mice_lite) additionally return
per-sweep diagnostics used by the property tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .data import EncodedMatrix
from .nn import (
    adam_step,
    backward,
    dense,
    forward,
    init_adam,
    init_params,
)

METHODS = ("mean", "median", "knn", "softimpute", "mice-lite", "mida")

# recognized in result tables for externally produced rows, but not runnable
RESERVED_METHODS = ("gain", "sinkhorn", "missforest")

_DEFAULT_HYPER: dict[str, dict] = {
    "mean": {},
    "median": {},
    "knn": {"k": 5},
    "softimpute": {"shrinkage": None, "max_rank": None, "max_sweeps": 100, "tol": 1e-5},
    "mice-lite": {"sweeps": 10, "ridge": 1e-3},
    "mida": {
        "hidden_offsets": (7, 14),
        "corruption": 0.25,
        "iterations": 300,
        "learning_rate": 1e-3,
    },
}


class ImputerError(ValueError):
    """Bad imputer spec or input violating an imputer precondition."""


@dataclass(frozen=True)
class ImputerSpec:
    """Imputation method plus validated, default-filled hyperparameters."""

    method: str
    seed: int = 0
    hyper: Mapping = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.method in RESERVED_METHODS:
            raise ImputerError(
                f"method {self.method!r} is reserved for externally merged "
                f"results and cannot be run here"
            )
        if self.method not in METHODS:
            raise ImputerError(f"unknown imputer method {self.method!r}")
        merged = dict(_DEFAULT_HYPER[self.method])
        unknown = set(self.hyper) - set(merged)
        if unknown:
            raise ImputerError(
                f"{self.method}: unknown hyperparameters {sorted(unknown)}"
            )
        merged.update(self.hyper)
        self._validate(merged)
        object.__setattr__(self, "hyper", MappingProxyType(merged))

    def _validate(self, hyper: dict) -> None:
        if self.method == "knn":
            if not isinstance(hyper["k"], int) or hyper["k"] < 1:
                raise ImputerError(f"knn: k must be a positive integer, got {hyper['k']!r}")
        elif self.method == "softimpute":
            if hyper["shrinkage"] is not None and hyper["shrinkage"] <= 0:
                raise ImputerError("softimpute: shrinkage must be positive")
            if hyper["max_rank"] is not None and hyper["max_rank"] < 1:
                raise ImputerError("softimpute: max_rank must be >= 1")
            if hyper["max_sweeps"] < 1 or hyper["tol"] <= 0:
                raise ImputerError("softimpute: bad max_sweeps or tol")
        elif self.method == "mice-lite":
            if hyper["sweeps"] < 1 or hyper["ridge"] < 0:
                raise ImputerError("mice-lite: bad sweeps or ridge")
        elif self.method == "mida":
            offs = tuple(hyper["hidden_offsets"])
            if len(offs) != 2 or any(o < 1 for o in offs):
                raise ImputerError("mida: hidden_offsets must be two positive ints")
            if not 0.0 <= hyper["corruption"] < 1.0:
                raise ImputerError("mida: corruption must be in [0, 1)")
            if hyper["iterations"] < 1 or hyper["learning_rate"] <= 0:
                raise ImputerError("mida: bad iterations or learning_rate")


def _check_columns_observed(mask: np.ndarray) -> None:
    empty = np.flatnonzero(mask.sum(axis=0) == 0)
    if empty.size:
        raise ImputerError(f"columns with no observed entries: {empty.tolist()}")


def _column_means(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # fsum is correctly rounded, so means are exactly row-order independent
    return np.array(
        [
            math.fsum(values[mask[:, c] == 1.0, c]) / mask[:, c].sum()
            for c in range(values.shape[1])
        ]
    )


def _mean_fill(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    means = _column_means(values, mask)
    return np.where(mask == 1.0, values, means[None, :])


def impute(encoded: EncodedMatrix, spec: ImputerSpec) -> np.ndarray:
    """Complete the encoded matrix with the given baseline.

    Observed cells pass through untouched; filled cells are clamped to
    [0, 1]. Raises on columns without any observed entry.
    """
    values, mask = encoded.values, encoded.mask
    _check_columns_observed(mask)
    if spec.method == "mean":
        filled = _mean_fill(values, mask)
    elif spec.method == "median":
        medians = np.array(
            [np.median(values[mask[:, c] == 1.0, c]) for c in range(values.shape[1])]
        )
        filled = np.where(mask == 1.0, values, medians[None, :])
    elif spec.method == "knn":
        filled = _knn_fill(values, mask, k=spec.hyper["k"], seed=spec.seed)
    elif spec.method == "softimpute":
        filled, _ = soft_impute(
            values,
            mask,
            shrinkage=spec.hyper["shrinkage"],
            max_rank=spec.hyper["max_rank"],
            max_sweeps=spec.hyper["max_sweeps"],
            tol=spec.hyper["tol"],
        )
    elif spec.method == "mice-lite":
        filled, _ = mice_lite(
            values, mask, sweeps=spec.hyper["sweeps"], ridge=spec.hyper["ridge"]
        )
    else:
        filled = _mida_fill(values, mask, spec)
    out = np.clip(filled, 0.0, 1.0)
    return np.where(mask == 1.0, values, out)  # exact observed-cell preservation


def _knn_fill(values: np.ndarray, mask: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Mean of the k nearest rows (by Euclidean distance over mutually
    observed coordinates, rescaled by the usable fraction) among rows that
    observe the target column. Distance ties break by a seeded permutation."""
    n, d = values.shape
    if k > n - 1:
        raise ImputerError(f"knn: k={k} exceeds n-1={n - 1}")
    v = values * mask
    sq = v * v
    # pairwise masked squared distance: sum over mutual coords of (vi - vj)^2
    d2 = sq @ mask.T + mask @ sq.T - 2.0 * (v @ v.T)
    counts = mask @ mask.T
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = np.where(counts > 0, d2 * (d / np.maximum(counts, 1)), np.inf)
    d2 = np.maximum(d2, 0.0)  # guard tiny negatives from cancellation
    tie_break = np.random.default_rng(seed).permutation(n)
    means = _column_means(values, mask)
    out = values.copy()
    for c in range(d):
        receivers = np.flatnonzero(mask[:, c] == 0.0)
        if receivers.size == 0:
            continue
        donors = np.flatnonzero(mask[:, c] == 1.0)
        for i in receivers:
            dist = d2[i, donors]
            usable = np.isfinite(dist)
            if not usable.any():
                out[i, c] = means[c]  # no overlapping coordinates with any donor
                continue
            pool = donors[usable]
            order = np.lexsort((tie_break[pool], d2[i, pool]))
            chosen = pool[order[: min(k, pool.size)]]
            out[i, c] = values[chosen, c].mean()
    return out


def soft_impute(
    values: np.ndarray,
    mask: np.ndarray,
    shrinkage: float | None = None,
    max_rank: int | None = None,
    max_sweeps: int = 100,
    tol: float = 1e-5,
) -> tuple[np.ndarray, list[float]]:
    """Iterative soft-thresholded SVD completion.

    Each sweep replaces missing cells with the current low-rank estimate and
    soft-thresholds the singular values by shrinkage (default 0.1 * sigma_1
    of the mean-filled matrix). Returns (completed matrix, per-sweep values
    of the regularized objective 0.5*||observed residual||^2 + shrinkage *
    nuclear norm), which is non-increasing.
    """
    _check_columns_observed(mask)
    n, d = values.shape
    if max_rank is None:
        max_rank = min(n, d)
    filled = _mean_fill(values, mask)
    if shrinkage is None:
        shrinkage = 0.1 * float(np.linalg.svd(filled, compute_uv=False)[0])
    objective: list[float] = []
    z = filled
    for _ in range(max_sweeps):
        u, s, vt = np.linalg.svd(filled, full_matrices=False)
        s_shrunk = np.maximum(s - shrinkage, 0.0)[:max_rank]
        z_new = (u[:, : s_shrunk.shape[0]] * s_shrunk) @ vt[: s_shrunk.shape[0]]
        residual = (values - z_new) * mask
        objective.append(
            0.5 * float(np.sum(residual * residual)) + shrinkage * float(s_shrunk.sum())
        )
        change = float(np.linalg.norm(z_new - z)) / max(float(np.linalg.norm(z)), 1e-12)
        z = z_new
        filled = np.where(mask == 1.0, values, z)
        if change < tol:
            break
    return filled, objective


def mice_lite(
    values: np.ndarray,
    mask: np.ndarray,
    sweeps: int = 10,
    ridge: float = 1e-3,
) -> tuple[np.ndarray, list[float]]:
    """Chained-equations imputation by column-wise ridge regression.

    Columns are visited in ascending-missingness order (ties by index); each
    visit refits a ridge regression of the column on all other columns plus
    an intercept over the rows observing it, then rewrites its missing
    cells. Returns (completed matrix, per-sweep mean absolute change of the
    imputed cells). Single imputation: one completed matrix, no draws.
    """
    _check_columns_observed(mask)
    n, d = values.shape
    filled = _mean_fill(values, mask)
    missing_per_col = (mask == 0.0).sum(axis=0)
    order = [c for c in np.argsort(missing_per_col, kind="stable") if missing_per_col[c] > 0]
    changes: list[float] = []
    if not order:
        return filled, changes
    total_missing = int((mask == 0.0).sum())
    for _ in range(sweeps):
        delta = 0.0
        for c in order:
            rows_obs = mask[:, c] == 1.0
            rows_mis = ~rows_obs
            others = [j for j in range(d) if j != c]
            f = np.column_stack([filled[rows_obs][:, others], np.ones(int(rows_obs.sum()))])
            y = values[rows_obs, c]
            penalty = np.eye(f.shape[1]) * ridge
            penalty[-1, -1] = 0.0  # no penalty on the intercept
            try:
                beta = np.linalg.solve(f.T @ f + penalty, f.T @ y)
            except np.linalg.LinAlgError:
                beta = np.linalg.lstsq(f.T @ f + penalty, f.T @ y, rcond=None)[0]
            g = np.column_stack([filled[rows_mis][:, others], np.ones(int(rows_mis.sum()))])
            new_vals = g @ beta
            delta += float(np.abs(new_vals - filled[rows_mis, c]).sum())
            filled[rows_mis, c] = new_vals
        changes.append(delta / max(total_missing, 1))
    return filled, changes


def _mida_fill(values: np.ndarray, mask: np.ndarray, spec: ImputerSpec) -> np.ndarray:
    """Overcomplete denoising autoencoder trained on the mean-filled matrix.

    Input corruption zeroes a fraction of observed cells each iteration; the
    loss is the masked squared error against the observed values, so the
    network learns to restore them from context. The completed matrix is the
    network output on the uncorrupted mean-filled input.
    """
    n, d = values.shape
    off1, off2 = spec.hyper["hidden_offsets"]
    layers = (
        dense(d, d + off1, "relu"),
        dense(d + off1, d + off2, "relu"),
        dense(d + off2, d + off1, "relu"),
        dense(d + off1, d, "sigmoid"),
    )
    params = init_params(layers, seed=spec.seed)
    state = init_adam(params, learning_rate=spec.hyper["learning_rate"])
    rng = np.random.default_rng(spec.seed)
    base = _mean_fill(values, mask)
    corruption = spec.hyper["corruption"]
    for _ in range(spec.hyper["iterations"]):
        zero = (rng.random((n, d)) < corruption) & (mask == 1.0)
        net_in = np.where(zero, 0.0, base)
        pred, cache = forward(params, net_in)
        grads = backward(params, cache, pred, values, mask)
        params, state = adam_step(params, grads, state)
    out, _ = forward(params, base)
    return out
