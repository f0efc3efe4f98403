"""Render metric-vs-noise-rate figures and significance tables.

Input is a results.csv with the fixed columns
``experiment,dataset,method,noise_rate,seed,bal_acc,auc,wall_s,hyper_json_echo``.
Rows whose metric field is empty are error rows; they are excluded from all
aggregates, and a cell whose runs all errored becomes a gap in its line
(flagged in the legend). Rendering never writes back to the CSV.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy import stats

SCHEMA = (
    "experiment",
    "dataset",
    "method",
    "noise_rate",
    "seed",
    "bal_acc",
    "auc",
    "wall_s",
    "hyper_json_echo",
)
METRICS = ("auc", "bal_acc")
METRIC_LABELS = {"auc": "AUC", "bal_acc": "balanced accuracy"}
BETTER, EVEN, WORSE = "•", "≡", "◦"


class ReportError(ValueError):
    """Raised for schema or plot-spec problems."""


@dataclass(frozen=True)
class PlotSpec:
    """What to render from one results file."""

    csv_path: str
    out_dir: str
    metric: str = "auc"
    formats: tuple[str, ...] = ("png", "svg")
    reference: str | None = None  # method the marks compare against
    alpha: float = 0.05

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ReportError(f"metric must be one of {', '.join(METRICS)}")
        bad = [f for f in self.formats if f not in ("png", "svg")]
        if bad:
            raise ReportError(f"unsupported formats: {', '.join(bad)}")
        if not self.formats:
            raise ReportError("at least one output format is required")


def read_results(path: str) -> list[dict]:
    """Load rows, insisting on the fixed column schema."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in SCHEMA if c not in header]
            if missing:
                raise ReportError(f"results file missing columns: {', '.join(missing)}")
            return list(reader)
    except OSError as exc:
        raise ReportError(f"results not readable: {exc}") from exc


@dataclass
class CellStats:
    """Per (dataset, method, rate) aggregate over seeds."""

    values: list[float] = field(default_factory=list)
    n_errors: int = 0

    @property
    def mean(self) -> float | None:
        return float(np.mean(self.values)) if self.values else None

    @property
    def std(self) -> float | None:
        return float(np.std(self.values)) if self.values else None


def aggregate(rows: list[dict], metric: str) -> dict[tuple[str, str, float], CellStats]:
    """Group metric values by (dataset, method, noise_rate)."""
    cells: dict[tuple[str, str, float], CellStats] = {}
    for row in rows:
        key = (row["dataset"], row["method"], float(row["noise_rate"]))
        cell = cells.setdefault(key, CellStats())
        raw = row.get(metric, "")
        if raw == "":
            cell.n_errors += 1
        else:
            cell.values.append(float(raw))
    return cells


def _ordered(rows: list[dict], column: str) -> list[str]:
    return list(dict.fromkeys(r[column] for r in rows))


def detect_reference(rows: list[dict]) -> str | None:
    """First method whose hyperparameter echo declares corrector kind."""
    for row in rows:
        try:
            echo = json.loads(row.get("hyper_json_echo") or "{}")
        except json.JSONDecodeError:
            continue
        if echo.get("kind") == "corrector":
            return row["method"]
    return None


def _mark(ref_vals: list[float], vals: list[float], alpha: float) -> str:
    """Welch-test mark: reference better (•), worse (◦), or even (≡)."""
    if len(ref_vals) != len(vals) or len(vals) < 2:
        return ""
    if np.std(ref_vals) == 0.0 and np.std(vals) == 0.0:
        return EVEN if np.mean(ref_vals) == np.mean(vals) else (
            BETTER if np.mean(ref_vals) > np.mean(vals) else WORSE
        )
    p = float(stats.ttest_ind(ref_vals, vals, equal_var=False).pvalue)
    if p >= alpha:
        return EVEN
    return BETTER if np.mean(ref_vals) > np.mean(vals) else WORSE


def render(spec: PlotSpec) -> list[str]:
    """Write one figure per dataset (in every requested format) plus one
    companion markdown table per dataset; returns the written paths."""
    rows = read_results(spec.csv_path)
    if not rows:
        raise ReportError("results file has no data rows")
    cells = aggregate(rows, spec.metric)
    datasets = _ordered(rows, "dataset")
    methods = _ordered(rows, "method")
    if not methods:
        raise ReportError("no methods present in results file")
    rates = sorted({float(r["noise_rate"]) for r in rows})
    reference = spec.reference if spec.reference is not None else detect_reference(rows)
    if reference is not None and reference not in methods:
        raise ReportError(f"reference method {reference!r} not in results")

    os.makedirs(spec.out_dir, exist_ok=True)
    written: list[str] = []
    for ds in datasets:
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        for method in methods:
            means, stds, gapped = [], [], False
            for rate in rates:
                cell = cells.get((ds, method, rate))
                if cell is None or cell.mean is None:
                    means.append(np.nan)
                    stds.append(0.0)
                    if cell is not None and cell.n_errors:
                        gapped = True
                else:
                    means.append(cell.mean)
                    stds.append(cell.std)
            label = method + (" (gaps: all runs errored)" if gapped else "")
            ax.errorbar(
                rates, means, yerr=stds, marker="o", capsize=3, label=label
            )
        ax.set_xlabel("noise rate")
        ax.set_ylabel(f"mean {METRIC_LABELS[spec.metric]} over seeds")
        ax.set_title(f"{ds}: {METRIC_LABELS[spec.metric]} vs injected noise rate")
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        base = os.path.join(spec.out_dir, f"{_slug(ds)}_{spec.metric}")
        for fmt in spec.formats:
            path = f"{base}.{fmt}"
            fig.savefig(path, format=fmt)
            written.append(path)
        plt.close(fig)
        table_path = f"{base}_table.md"
        _write_table(
            table_path, ds, methods, rates, cells, spec.metric, reference, spec.alpha
        )
        written.append(table_path)
    return written


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "-" for c in name) or "dataset"


def _write_table(
    path: str,
    ds: str,
    methods: list[str],
    rates: list[float],
    cells: dict,
    metric: str,
    reference: str | None,
    alpha: float,
) -> None:
    lines = [f"# {ds} — {METRIC_LABELS[metric]} (mean ± std over seeds)", ""]
    if reference is not None:
        lines.append(
            f"Marks versus `{reference}` (Welch test, alpha {alpha:g}): "
            f"{BETTER} reference better, {WORSE} reference worse, "
            f"{EVEN} no significant difference."
        )
        lines.append("")
    lines.append("| method | " + " | ".join(f"rate {r:g}" for r in rates) + " |")
    lines.append("|" + "---|" * (len(rates) + 1))
    for method in methods:
        out = []
        for rate in rates:
            cell = cells.get((ds, method, rate))
            if cell is None or cell.mean is None:
                out.append("—")
                continue
            text = f"{cell.mean:.3f}±{cell.std:.3f}"
            if reference is not None and method != reference:
                ref_cell = cells.get((ds, reference, rate))
                if ref_cell is not None:
                    mark = _mark(ref_cell.values, cell.values, alpha)
                    if mark:
                        text += f" {mark}"
            out.append(text)
        lines.append(f"| {method} | " + " | ".join(out) + " |")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
