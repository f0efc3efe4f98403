"""Reconstruction-based attribute-noise corrector with probed early stopping.

A small autoencoder is trained to reproduce the encoded matrix from a fixed
input (random noise or the data itself), with the squared error restricted to
observed cells. Because the network is underparameterized relative to the
data, it fits shared structure before it fits cell-level noise; training is
probed at a fixed interval and stopped once the probe metric (downstream
classification AUC, or the training loss itself) stops improving for a set
number of probes. The snapshot with the best probe metric is returned as the
corrected matrix.

The supervised probe reuses the labels that downstream evaluation will use.
That mirrors the intended workflow but is a leakage caveat; the loss-based
stop is available to quantify the gap.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import ConstantFeatureWarning, EncodedMatrix, decode, encode
from .evaluation import EvaluationError, cv_evaluate
from .nn import (
    LayerSpec,
    NonFiniteGradientError,
    adam_step,
    backward,
    chain_output_width,
    conv_autoencoder,
    dense_autoencoder,
    forward,
    init_adam,
    init_params,
    masked_mse,
)

RANDOM_NOISE = "random-noise"
ORIGINAL_DATA = "original-data"
SUPERVISED_AUC = "supervised-auc"
TRAINING_LOSS = "training-loss"

# beyond this encoded width the default architecture switches to conv1d and
# the default input to the data itself
WIDE_INPUT_THRESHOLD = 64


class CorrectorError(ValueError):
    """Configuration or input violates a corrector precondition."""


class TrainingDivergedError(RuntimeError):
    """Loss or gradients turned non-finite; carries the trace so far."""

    def __init__(self, message: str, trace: "TrainingTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class CorrectorConfig:
    """Training, probing, and stopping knobs.

    input_mode and architecture left at None resolve per the encoded width:
    random-noise input and a dense bottleneck below WIDE_INPUT_THRESHOLD
    columns, original-data input and a conv1d chain at or above it.
    min_rel_improvement is the plateau tolerance of the loss-based stop: a
    probe counts as an improvement only when it beats the best loss by that
    relative margin (the AUC stop uses strict improvement).
    """

    input_mode: str | None = None
    architecture: tuple[LayerSpec, ...] | None = None
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_iterations: int = 10_000
    probe_interval: int = 50
    patience: int = 5
    min_rel_improvement: float = 1e-4
    stop_metric: str = SUPERVISED_AUC
    probe_tree_depth: int = 5
    probe_folds: int = 5
    seed: int = 0
    probe_seed: int = 0

    def __post_init__(self) -> None:
        if self.input_mode not in (None, RANDOM_NOISE, ORIGINAL_DATA):
            raise CorrectorError(f"unknown input_mode {self.input_mode!r}")
        if self.stop_metric not in (SUPERVISED_AUC, TRAINING_LOSS):
            raise CorrectorError(f"unknown stop_metric {self.stop_metric!r}")
        if self.probe_interval < 1:
            raise CorrectorError("probe_interval must be >= 1")
        if self.patience < 1:
            raise CorrectorError("patience must be >= 1")
        if self.max_iterations < self.probe_interval:
            raise CorrectorError("max_iterations must be >= probe_interval")
        if self.learning_rate <= 0:
            raise CorrectorError("learning_rate must be positive")


@dataclass(frozen=True)
class ReconstructionSnapshot:
    """Network output at one probe; x_hat matches the encoded input's shape
    and stays in (0, 1) for the default sigmoid-output chains."""

    iteration: int
    x_hat: np.ndarray


@dataclass(frozen=True)
class ProbeRecord:
    iteration: int
    loss: float
    metric: float
    snapshot_id: int


@dataclass
class TrainingTrace:
    """Probe history of one fit.

    records grow in strictly increasing iteration order; chosen_snapshot is
    the id (= iteration) of the best-metric probe. snapshots retains the
    reconstruction matrices only for iteration 0 and the chosen probe, to
    bound memory; every record still carries its metric values.
    """

    records: list[ProbeRecord] = field(default_factory=list)
    chosen_snapshot: int = 0
    snapshots: dict[int, ReconstructionSnapshot] = field(default_factory=dict)
    stop_reason: str = ""


def write_trace_csv(trace: TrainingTrace, path: str) -> None:
    """Trace as CSV: iteration, loss, metric, chosen flag."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss", "metric", "chosen"])
        for rec in trace.records:
            writer.writerow(
                [
                    rec.iteration,
                    f"{rec.loss:.8f}",
                    f"{rec.metric:.8f}",
                    int(rec.iteration == trace.chosen_snapshot),
                ]
            )


def make_input(
    mode: str, shape: tuple[int, int], placeholder_matrix: EncodedMatrix, seed: int = 0
) -> np.ndarray:
    """The fixed network input: uniform noise or the encoded values.

    The returned matrix is drawn (or copied) once; training never resamples
    it."""
    if shape != placeholder_matrix.values.shape:
        raise CorrectorError(
            f"shape {shape} does not match encoded matrix {placeholder_matrix.values.shape}"
        )
    if mode == RANDOM_NOISE:
        return np.random.default_rng(seed).random(shape)
    if mode == ORIGINAL_DATA:
        return placeholder_matrix.values.copy()
    raise CorrectorError(f"unknown input mode {mode!r}")


def probe_auc(
    x_hat: np.ndarray,
    encoded: EncodedMatrix,
    labels: np.ndarray,
    probe_seed: int = 0,
    tree_depth: int = 5,
    n_folds: int = 5,
) -> float:
    """Downstream class-separability of a reconstruction.

    The reconstruction is decoded to raw values and re-encoded (rounding
    one-hot groups to hard categories), then scored by stratified k-fold
    decision-tree CV; the mean AUC over folds comes back. When a class is too
    small for the requested folds, the split is re-stratified with fewer
    folds; below 2 rows per class there is nothing to stratify and the probe
    errors out.
    """
    labels = np.asarray(labels)
    counts = np.bincount(labels.astype(np.int64), minlength=2)
    if counts.min() < 2:
        raise EvaluationError("probe needs at least 2 rows of each class")
    folds = min(n_folds, int(counts.min()))
    clipped = np.clip(x_hat, 0.0, 1.0)
    with warnings.catch_warnings():
        # early reconstructions are near-constant per column; the constant-
        # feature warning is expected noise here
        warnings.simplefilter("ignore", ConstantFeatureWarning)
        ds = decode(replace(encoded, values=clipped))
        matrix = encode(ds).values
    report = cv_evaluate(
        matrix, labels, n_folds=folds, seeds=(probe_seed,), max_depth=tree_depth
    )
    return report.auc


def _resolve(config: CorrectorConfig, width: int) -> tuple[str, tuple[LayerSpec, ...]]:
    mode = config.input_mode
    if mode is None:
        mode = RANDOM_NOISE if width < WIDE_INPUT_THRESHOLD else ORIGINAL_DATA
    arch = config.architecture
    if arch is None:
        arch = (
            dense_autoencoder(width)
            if width < WIDE_INPUT_THRESHOLD
            else conv_autoencoder()
        )
    if chain_output_width(arch, width) != width:
        raise CorrectorError("architecture output width does not match the data")
    return mode, arch


def fit_correct(
    encoded: EncodedMatrix,
    labels: np.ndarray | None,
    config: CorrectorConfig,
) -> tuple[np.ndarray, TrainingTrace]:
    """Train the corrector and return (corrected matrix, trace).

    Probes run before training (iteration 0) and every probe_interval
    iterations; training stops after `patience` consecutive probes without
    metric improvement, or at max_iterations. The returned matrix is the
    probe snapshot with the best metric (highest AUC or lowest loss). A
    non-finite loss or gradient aborts with TrainingDivergedError carrying
    the trace collected so far.
    """
    values, mask = encoded.values, encoded.mask
    n, width = values.shape
    if config.stop_metric == SUPERVISED_AUC:
        if labels is None:
            raise CorrectorError("supervised-auc stop requires labels")
        lab = np.asarray(labels).astype(np.int64)
        if np.unique(lab).shape[0] < 2:
            raise CorrectorError("supervised-auc stop requires both classes")
    mode, arch = _resolve(config, width)
    net_input = make_input(mode, (n, width), encoded, seed=config.seed)
    params = init_params(arch, seed=config.seed)
    state = init_adam(
        params,
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.epsilon,
    )
    trace = TrainingTrace()
    higher_better = config.stop_metric == SUPERVISED_AUC

    def probe(iteration: int) -> tuple[float, float, np.ndarray]:
        x_hat, _ = forward(params, net_input)
        loss = masked_mse(x_hat, values, mask)
        if not np.isfinite(loss):
            trace.stop_reason = "diverged"
            raise TrainingDivergedError(
                f"non-finite loss at iteration {iteration}", trace
            )
        if higher_better:
            metric = probe_auc(
                x_hat,
                encoded,
                labels,
                probe_seed=config.probe_seed,
                tree_depth=config.probe_tree_depth,
                n_folds=config.probe_folds,
            )
        else:
            metric = loss
        trace.records.append(
            ProbeRecord(iteration=iteration, loss=loss, metric=metric, snapshot_id=iteration)
        )
        return loss, metric, x_hat

    def better_raw(metric: float, best: float) -> bool:
        return metric > best if higher_better else metric < best

    def improvement(metric: float, best: float) -> bool:
        if higher_better:
            return metric > best
        return metric < best * (1.0 - config.min_rel_improvement)

    _, metric0, x_hat0 = probe(0)
    trace.snapshots[0] = ReconstructionSnapshot(iteration=0, x_hat=x_hat0.copy())
    best_raw = metric0  # drives snapshot retention
    best_event = metric0  # drives the patience counter
    chosen = 0
    bad_probes = 0
    stopped = False

    iteration = 0
    while iteration < config.max_iterations and not stopped:
        iteration += 1
        with np.errstate(over="ignore", invalid="ignore"):
            pred, cache = forward(params, net_input)
            loss = masked_mse(pred, values, mask)
            if not np.isfinite(loss):
                trace.stop_reason = "diverged"
                raise TrainingDivergedError(
                    f"non-finite loss at iteration {iteration}", trace
                )
            grads = backward(params, cache, pred, values, mask)
        try:
            params, state = adam_step(params, grads, state)
        except NonFiniteGradientError as exc:
            trace.stop_reason = "diverged"
            raise TrainingDivergedError(str(exc), trace) from exc
        if iteration % config.probe_interval == 0 or iteration == config.max_iterations:
            _, metric, x_hat = probe(iteration)
            if better_raw(metric, best_raw):
                best_raw = metric
                chosen = iteration
                trace.snapshots = {
                    0: trace.snapshots[0],
                    iteration: ReconstructionSnapshot(iteration=iteration, x_hat=x_hat.copy()),
                }
            if improvement(metric, best_event):
                best_event = metric
                bad_probes = 0
            else:
                bad_probes += 1
                if bad_probes >= config.patience:
                    trace.stop_reason = "patience"
                    stopped = True
    if not trace.stop_reason:
        trace.stop_reason = "max-iterations"
    trace.chosen_snapshot = chosen
    corrected = trace.snapshots[chosen].x_hat.copy()
    return corrected, trace
