"""Config-driven benchmark runner.

Reads a sectioned key/value config describing one experiment sweep, runs
every (method, noise rate, seed) cell, and emits:

* ``results.csv`` — one row per cell with the fixed column set
  ``experiment,dataset,method,noise_rate,seed,bal_acc,auc,wall_s,hyper_json_echo``;
* ``summary.md`` — mean ± std tables regenerated purely from the CSV, with
  Welch-test marks comparing the reconstruction-corrector arm to every other
  method;
* ``traces/*.csv`` — per-run training traces for corrector cells.

A failing cell becomes an error row (metrics empty, the message echoed in
the JSON column) and the sweep continues; partial results are valid output.
"""

from __future__ import annotations

import configparser
import csv
import json
import os
import re
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .cleaning import pfil, ppol, sfil, spol
from .corrector import CorrectorConfig, fit_correct, write_trace_csv
from .data import (
    CATEGORICAL,
    CONTINUOUS,
    ConstantFeatureWarning,
    Dataset,
    EncodedMatrix,
    FeatureSpec,
    decode,
    encode,
    load_csv,
    synth_generate,
)
from .evaluation import EvaluationError, cv_evaluate, mark_significance
from .imputers import METHODS, ImputerSpec, impute
from .noiselab import PROTOCOL_RATES, NoisePlan, inject_noise

EXPERIMENT_KINDS = ("impute", "impute-under-noise", "pipeline-vs-corrector")
CLEANERS = ("sfil", "pfil", "spol", "ppol", "none")
RESULT_COLUMNS = (
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

_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_+.-]*$")

# CorrectorConfig fields a config file may set; seeds are always per-cell.
_CORRECTOR_KEYS = {
    "input_mode": str,
    "learning_rate": float,
    "max_iterations": int,
    "probe_interval": int,
    "patience": int,
    "min_rel_improvement": float,
    "stop_metric": str,
    "probe_tree_depth": int,
    "probe_folds": int,
}


class BenchError(ValueError):
    """Raised for config or results-schema problems.

    ``errors`` carries every individual message so a caller can report all
    of them at once.
    """

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class DatasetSpec:
    """Where the benchmark table comes from."""

    source: str  # "synthetic" | "csv"
    name: str
    rows: int = 200
    continuous: int = 10
    categorical: int = 0
    missing_rate: float = 0.0
    seed: int = 0
    path: str = ""
    label: str = "label"
    columns: tuple[FeatureSpec, ...] = ()


@dataclass(frozen=True)
class MethodSpec:
    """One experimental arm: an imputer, a corrector, or a pipeline."""

    name: str
    kind: str  # "imputer" | "corrector" | "pipeline"
    imputer: str = ""
    cleaner: str = ""
    fraction: float = 0.1
    hyper: dict = field(default_factory=dict)

    def echo(self) -> dict:
        out = {"kind": self.kind, **self.hyper}
        if self.imputer:
            out["imputer"] = self.imputer
        if self.cleaner:
            out["cleaner"] = self.cleaner
        if self.kind == "pipeline" and self.cleaner in ("pfil", "ppol"):
            out["fraction"] = self.fraction
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated sweep description."""

    name: str
    kind: str
    dataset: DatasetSpec
    methods: tuple[MethodSpec, ...]
    rates: tuple[float, ...]
    seeds: tuple[int, ...]
    output_dir: str
    workers: int = 1


# ----------------------------------------------------------------- config IO


def _parse_floats(raw: str) -> list[float]:
    return [float(tok) for tok in re.split(r"[,\s]+", raw.strip()) if tok]


def _parse_ints(raw: str) -> list[int]:
    return [int(tok) for tok in re.split(r"[,\s]+", raw.strip()) if tok]


def _parse_columns(raw: str) -> tuple[FeatureSpec, ...]:
    """Parse ``name:continuous, name:categorical:a|b|c`` column lists."""
    specs = []
    for entry in raw.split(","):
        entry = entry.strip()
        if not entry:
            continue
        parts = entry.split(":")
        if len(parts) == 2 and parts[1] == CONTINUOUS:
            specs.append(FeatureSpec(name=parts[0], kind=CONTINUOUS))
        elif len(parts) == 3 and parts[1] == CATEGORICAL:
            cats = tuple(c for c in parts[2].split("|") if c)
            specs.append(FeatureSpec(name=parts[0], kind=CATEGORICAL, categories=cats))
        else:
            raise ValueError(
                f"column entry {entry!r} is not name:continuous or "
                "name:categorical:a|b|c"
            )
    return tuple(specs)


def _get(section, key, conv, default, errors, where):
    raw = section.get(key)
    if raw is None:
        return default
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        errors.append(f"[{where}] {key}: {exc}")
        return default


def _validate_dataset(parser, errors) -> DatasetSpec:
    if not parser.has_section("dataset"):
        errors.append("[dataset] section missing")
        return DatasetSpec(source="synthetic", name="synthetic")
    sec = parser["dataset"]
    source = sec.get("source", "synthetic").strip()
    known = {
        "source", "name", "rows", "continuous", "categorical",
        "missing_rate", "seed", "path", "label", "columns",
    }
    for key in sec:
        if key not in known:
            errors.append(f"[dataset] {key}: unknown option")
    if source not in ("synthetic", "csv"):
        errors.append(f"[dataset] source: {source!r} is not synthetic or csv")
        source = "synthetic"
    rows = _get(sec, "rows", int, 200, errors, "dataset")
    continuous = _get(sec, "continuous", int, 10, errors, "dataset")
    categorical = _get(sec, "categorical", int, 0, errors, "dataset")
    missing_rate = _get(sec, "missing_rate", float, 0.0, errors, "dataset")
    seed = _get(sec, "seed", int, 0, errors, "dataset")
    path = sec.get("path", "").strip()
    label = sec.get("label", "label").strip()
    columns: tuple[FeatureSpec, ...] = ()
    if source == "synthetic":
        if rows < 10:
            errors.append("[dataset] rows: must be at least 10")
        if continuous + categorical < 1:
            errors.append("[dataset] continuous/categorical: need at least one feature")
        if not 0.0 <= missing_rate < 1.0:
            errors.append("[dataset] missing_rate: must be in [0, 1)")
        name = sec.get("name", f"synth-n{rows}-d{continuous + categorical}").strip()
    else:
        if not path:
            errors.append("[dataset] path: required for csv source")
        elif not os.path.exists(path):
            errors.append(f"[dataset] path: file not found: {path}")
        if not sec.get("columns", "").strip():
            errors.append("[dataset] columns: required for csv source")
        else:
            try:
                columns = _parse_columns(sec["columns"])
            except ValueError as exc:
                errors.append(f"[dataset] columns: {exc}")
        name = sec.get("name", os.path.splitext(os.path.basename(path))[0] or "csv").strip()
    return DatasetSpec(
        source=source,
        name=name,
        rows=rows,
        continuous=continuous,
        categorical=categorical,
        missing_rate=missing_rate,
        seed=seed,
        path=path,
        label=label,
        columns=columns,
    )


def _convert_hyper(items: dict[str, str], errors, where) -> dict:
    """Best-effort int/float/str conversion of leftover config options."""
    out = {}
    for key, raw in items.items():
        raw = raw.strip()
        try:
            out[key] = int(raw)
            continue
        except ValueError:
            pass
        try:
            out[key] = float(raw)
            continue
        except ValueError:
            pass
        out[key] = raw
    return out


def _validate_method(name: str, sec, errors) -> MethodSpec:
    where = f"method {name}"
    if not _NAME_RE.match(name):
        errors.append(
            f"[{where}] name: must match [A-Za-z0-9][A-Za-z0-9_+.-]* "
            "(it becomes part of file names)"
        )
    kind = sec.get("type", "").strip()
    opts = {k: v for k, v in sec.items() if k != "type"}
    if kind == "imputer":
        method = opts.pop("imputer", "").strip()
        hyper = _convert_hyper(opts, errors, where)
        try:
            ImputerSpec(method=method, hyper=hyper)
        except Exception as exc:
            errors.append(f"[{where}] {exc}")
        return MethodSpec(name=name, kind="imputer", imputer=method, hyper=hyper)
    if kind == "corrector":
        hyper = {}
        for key, raw in opts.items():
            if key not in _CORRECTOR_KEYS:
                allowed = ", ".join(sorted(_CORRECTOR_KEYS))
                errors.append(
                    f"[{where}] {key}: unknown corrector option (allowed: {allowed}; "
                    "seeds are always taken from the run seed)"
                )
                continue
            try:
                hyper[key] = _CORRECTOR_KEYS[key](raw.strip())
            except ValueError as exc:
                errors.append(f"[{where}] {key}: {exc}")
        try:
            CorrectorConfig(**hyper)
        except Exception as exc:
            errors.append(f"[{where}] {exc}")
        return MethodSpec(name=name, kind="corrector", hyper=hyper)
    if kind == "pipeline":
        method = opts.pop("imputer", "").strip()
        cleaner = opts.pop("cleaner", "").strip()
        fraction = 0.1
        if "fraction" in opts:
            try:
                fraction = float(opts.pop("fraction"))
                if not 0.0 < fraction < 1.0:
                    raise ValueError("must be in (0, 1)")
            except ValueError as exc:
                errors.append(f"[{where}] fraction: {exc}")
        pairing = (
            "a pipeline pairs one imputation method "
            f"({', '.join(METHODS)}) with one cleaner ({', '.join(CLEANERS)})"
        )
        if method in CLEANERS or cleaner in METHODS or cleaner == "corrector":
            errors.append(f"[{where}] imputer/cleaner: {pairing}")
        else:
            if cleaner not in CLEANERS:
                errors.append(f"[{where}] cleaner: {cleaner!r} unknown; {pairing}")
            hyper = _convert_hyper(opts, errors, where)
            try:
                ImputerSpec(method=method, hyper=hyper)
            except Exception as exc:
                errors.append(f"[{where}] {exc}")
            return MethodSpec(
                name=name, kind="pipeline", imputer=method, cleaner=cleaner,
                fraction=fraction, hyper=hyper,
            )
        return MethodSpec(name=name, kind="pipeline", imputer=method, cleaner=cleaner)
    errors.append(f"[{where}] type: must be imputer, corrector, or pipeline")
    return MethodSpec(name=name, kind="imputer", imputer="mean")


def validate_config(path: str) -> ExperimentConfig:
    """Parse and cross-check a config file; raise BenchError listing every problem."""
    errors: list[str] = []
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise BenchError([f"config not readable: {exc}"]) from exc
    except configparser.Error as exc:
        raise BenchError([f"config syntax: {exc}"]) from exc

    if not parser.has_section("experiment"):
        errors.append("[experiment] section missing")
        kind, name = "impute", "experiment"
        rates, seeds, workers = (0.0,), tuple(range(10)), 1
    else:
        sec = parser["experiment"]
        for key in sec:
            if key not in ("name", "kind", "rates", "seeds", "workers"):
                errors.append(f"[experiment] {key}: unknown option")
        name = sec.get("name", "experiment").strip()
        kind = sec.get("kind", "").strip()
        if kind not in EXPERIMENT_KINDS:
            errors.append(
                f"[experiment] kind: {kind!r} is not one of {', '.join(EXPERIMENT_KINDS)}"
            )
        default_rates = (0.0,) if kind == "impute" else PROTOCOL_RATES
        rates = tuple(_get(sec, "rates", _parse_floats, list(default_rates), errors, "experiment"))
        seeds = tuple(_get(sec, "seeds", _parse_ints, list(range(10)), errors, "experiment"))
        workers = _get(sec, "workers", int, 1, errors, "experiment")
        if not rates:
            errors.append("[experiment] rates: list is empty")
        for r in rates:
            if not 0.0 <= r < 1.0:
                errors.append(f"[experiment] rates: {r} outside [0, 1)")
        if kind == "impute" and tuple(sorted(set(rates))) != (0.0,):
            errors.append("[experiment] rates: kind=impute requires rates = 0")
        if not seeds:
            errors.append("[experiment] seeds: list is empty")
        if len(set(seeds)) != len(seeds):
            errors.append("[experiment] seeds: duplicate seed values")
        if workers < 1:
            errors.append("[experiment] workers: must be >= 1")

    dataset = _validate_dataset(parser, errors)

    out_dir = "out"
    if parser.has_section("output"):
        for key in parser["output"]:
            if key != "directory":
                errors.append(f"[output] {key}: unknown option")
        out_dir = parser["output"].get("directory", "out").strip()
        if not out_dir:
            errors.append("[output] directory: must not be empty")

    methods = []
    for section in parser.sections():
        if section.startswith("method "):
            mname = section[len("method "):].strip()
            methods.append(_validate_method(mname, parser[section], errors))
        elif section not in ("experiment", "dataset", "output"):
            errors.append(f"[{section}] unknown section")
    if not methods:
        errors.append("[method ...] at least one method section is required")
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        errors.append("[method ...] duplicate method names")

    if errors:
        raise BenchError(errors)
    return ExperimentConfig(
        name=name,
        kind=kind,
        dataset=dataset,
        methods=tuple(methods),
        rates=tuple(sorted(set(rates))),
        seeds=tuple(sorted(set(seeds))),
        output_dir=out_dir,
        workers=workers,
    )


# --------------------------------------------------------------- cell runner


def _load_dataset(spec: DatasetSpec) -> Dataset:
    if spec.source == "synthetic":
        ds, _ = synth_generate(
            spec.rows, spec.continuous, spec.categorical,
            missing_rate=spec.missing_rate, seed=spec.seed,
        )
        return ds
    return load_csv(spec.path, spec.columns, label_column=spec.label)


def _noise_seed(rate: float, seed: int) -> int:
    # a function of the cell key alone, so adding rates or seeds to the
    # config never reshuffles existing cells
    return seed * 100003 + int(round(rate * 10000))


def _eval_matrix(filled: np.ndarray, m: EncodedMatrix) -> np.ndarray:
    """Decode a filled matrix and re-encode it for the downstream classifier.

    The round trip snaps one-hot groups to hard categories, exactly what the
    evaluation tree should see.
    """
    clipped = np.clip(filled, 0.0, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConstantFeatureWarning)
        ds = decode(replace(m, values=clipped))
        return encode(ds).values


@dataclass(frozen=True)
class BenchCell:
    """One pickle-friendly unit of work."""

    experiment: str
    dataset: DatasetSpec
    method_name: str
    method_kind: str
    imputer: str
    cleaner: str
    fraction: float
    hyper: tuple
    rate: float
    seed: int
    traces_dir: str
    # In pure-imputation experiments observed cells are trusted, so the
    # corrector's reconstruction only fills the holes instead of replacing
    # the whole matrix.
    fill_only: bool = False


def _run_cell(cell: BenchCell) -> dict:
    """Execute one (method, rate, seed) cell; never raises."""
    hyper = dict(cell.hyper)
    echo = {"kind": cell.method_kind, **hyper}
    if cell.imputer:
        echo["imputer"] = cell.imputer
    if cell.cleaner:
        echo["cleaner"] = cell.cleaner
    if cell.method_kind == "pipeline" and cell.cleaner in ("pfil", "ppol"):
        echo["fraction"] = cell.fraction
    row = {
        "experiment": cell.experiment,
        "dataset": cell.dataset.name,
        "method": cell.method_name,
        "noise_rate": f"{cell.rate:g}",
        "seed": str(cell.seed),
        "bal_acc": "",
        "auc": "",
        "wall_s": "",
        "hyper_json_echo": "",
    }
    start = time.perf_counter()
    try:
        ds = _load_dataset(cell.dataset)
        if ds.labels is None:
            raise EvaluationError("dataset has no label column to evaluate against")
        if cell.rate > 0.0:
            plan = NoisePlan(rate=cell.rate, seed=_noise_seed(cell.rate, cell.seed))
            ds, _ = inject_noise(ds, plan)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConstantFeatureWarning)
            m = encode(ds)
        labels = ds.labels

        if cell.method_kind == "imputer":
            filled = impute(m, ImputerSpec(method=cell.imputer, hyper=hyper))
            x_eval, y_eval = _eval_matrix(filled, m), labels
        elif cell.method_kind == "corrector":
            cfg = CorrectorConfig(seed=cell.seed, probe_seed=cell.seed, **hyper)
            corrected, trace = fit_correct(m, labels, cfg)
            if cell.fill_only:
                corrected = np.where(m.mask == 1.0, m.values, corrected)
            x_eval, y_eval = _eval_matrix(corrected, m), labels
            if cell.traces_dir:
                os.makedirs(cell.traces_dir, exist_ok=True)
                trace_path = os.path.join(
                    cell.traces_dir,
                    f"{cell.method_name}_r{cell.rate:g}_s{cell.seed}.csv",
                )
                write_trace_csv(trace, trace_path)
        else:  # pipeline
            filled = impute(m, ImputerSpec(method=cell.imputer, hyper=hyper))
            groups = m.column_groups()
            if cell.cleaner == "sfil":
                keep = sfil(filled, labels, seed=cell.seed)
                x_eval, y_eval = _eval_matrix(filled, m)[keep], labels[keep]
            elif cell.cleaner == "pfil":
                keep = pfil(filled, labels, fraction=cell.fraction)
                x_eval, y_eval = _eval_matrix(filled, m)[keep], labels[keep]
            elif cell.cleaner == "spol":
                polished = spol(filled, labels, groups=groups, seed=cell.seed)
                x_eval, y_eval = _eval_matrix(polished, m), labels
            elif cell.cleaner == "ppol":
                polished = ppol(filled, labels, fraction=cell.fraction, groups=groups)
                x_eval, y_eval = _eval_matrix(polished, m), labels
            else:  # none
                x_eval, y_eval = _eval_matrix(filled, m), labels

        counts = np.bincount(y_eval.astype(np.int64), minlength=2)
        if counts.min() < 2:
            raise EvaluationError("fewer than 2 rows of a class after filtering")
        folds = int(min(5, counts.min()))
        report = cv_evaluate(x_eval, y_eval, n_folds=folds, seeds=(cell.seed,))
        row["bal_acc"] = f"{report.balanced_accuracy:.6f}"
        row["auc"] = f"{report.auc:.6f}"
    except Exception as exc:  # errors-as-rows: the sweep must survive
        echo["error"] = f"{type(exc).__name__}: {exc}"
    row["wall_s"] = f"{time.perf_counter() - start:.3f}"
    row["hyper_json_echo"] = json.dumps(echo, sort_keys=True)
    return row


@dataclass(frozen=True)
class RunResult:
    """Where run_experiment wrote its outputs, plus cell counts."""

    results_path: str
    summary_path: str
    n_cells: int
    n_errors: int


def run_experiment(config: ExperimentConfig) -> RunResult:
    """Run every cell of the sweep and write results.csv + summary.md."""
    os.makedirs(config.output_dir, exist_ok=True)
    traces_dir = os.path.join(config.output_dir, "traces")
    cells = [
        BenchCell(
            experiment=config.name,
            dataset=config.dataset,
            method_name=m.name,
            method_kind=m.kind,
            imputer=m.imputer,
            cleaner=m.cleaner,
            fraction=m.fraction,
            hyper=tuple(sorted(m.hyper.items())),
            rate=rate,
            seed=seed,
            traces_dir=traces_dir if m.kind == "corrector" else "",
            fill_only=config.kind == "impute",
        )
        for m in config.methods
        for rate in config.rates
        for seed in config.seeds
    ]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(c) for c in cells]

    results_path = os.path.join(config.output_dir, "results.csv")
    with open(results_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    summary_path = os.path.join(config.output_dir, "summary.md")
    write_summary(results_path, summary_path)
    n_errors = sum(1 for r in rows if r["auc"] == "")
    return RunResult(
        results_path=results_path,
        summary_path=summary_path,
        n_cells=len(rows),
        n_errors=n_errors,
    )


# -------------------------------------------------------------- summarizing


def read_results(path: str) -> list[dict]:
    """Load results.csv rows, insisting on the fixed column schema."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in RESULT_COLUMNS if c not in header]
            if missing:
                raise BenchError(
                    [f"results file missing columns: {', '.join(missing)}"]
                )
            return list(reader)
    except OSError as exc:
        raise BenchError([f"results not readable: {exc}"]) from exc


def _fmt_cell(vals: list[float], mark: str) -> str:
    if not vals:
        return "—"
    mean = float(np.mean(vals))
    std = float(np.std(vals))
    return f"{mean:.3f}±{std:.3f}{mark}"


def write_summary(results_path: str, out_path: str | None = None) -> str:
    """Regenerate summary.md purely from a results.csv file.

    Means/stds are recomputed from the raw rows (never cached elsewhere) so
    the two files cannot disagree. Marks compare the first corrector-kind
    method against each other method per (dataset, rate) on equal-sized
    groups of successful runs: • corrector significantly better, ◦ worse,
    ≡ no significant difference (Welch test, alpha 0.05).
    """
    rows = read_results(results_path)
    if out_path is None:
        out_path = os.path.join(os.path.dirname(results_path) or ".", "summary.md")

    datasets = list(dict.fromkeys(r["dataset"] for r in rows))
    methods = list(dict.fromkeys(r["method"] for r in rows))
    rates = sorted({float(r["noise_rate"]) for r in rows})
    ref = next(
        (
            r["method"]
            for r in rows
            if json.loads(r["hyper_json_echo"] or "{}").get("kind") == "corrector"
        ),
        None,
    )

    def cell_rows(ds, method, rate, metric):
        return [
            float(r[metric])
            for r in rows
            if r["dataset"] == ds
            and r["method"] == method
            and float(r["noise_rate"]) == rate
            and r[metric] != ""
        ]

    lines = [f"# Benchmark summary: {os.path.basename(results_path)}", ""]
    n_err = sum(1 for r in rows if r["auc"] == "")
    lines.append(f"{len(rows)} runs, {n_err} errored.")
    if ref is not None:
        lines.append(
            f"Marks versus `{ref}` (Welch test, alpha 0.05): "
            "• corrector better, ◦ corrector worse, ≡ no significant difference."
        )
    lines.append("")
    for ds in datasets:
        lines.append(f"## {ds}")
        for metric, title in (("auc", "AUC"), ("bal_acc", "Balanced accuracy")):
            lines.append("")
            lines.append(f"### {title}")
            lines.append("")
            header = "| method | " + " | ".join(f"rate {r:g}" for r in rates) + " |"
            lines.append(header)
            lines.append("|" + "---|" * (len(rates) + 1))
            for method in methods:
                cells = []
                for rate in rates:
                    vals = cell_rows(ds, method, rate, metric)
                    mark = ""
                    if ref is not None and method != ref:
                        ours = cell_rows(ds, ref, rate, metric)
                        if len(ours) == len(vals) and len(vals) >= 2:
                            recs_o = [
                                {"dataset": ds, "noise_rate": rate, metric: v}
                                for v in ours
                            ]
                            recs_t = [
                                {"dataset": ds, "noise_rate": rate, metric: v}
                                for v in vals
                            ]
                            try:
                                mark = " " + mark_significance(
                                    recs_o, recs_t, metric
                                ).symbol
                            except EvaluationError:
                                mark = ""
                    cells.append(_fmt_cell(vals, mark))
                lines.append(f"| {method} | " + " | ".join(cells) + " |")
        lines.append("")
    text = "\n".join(lines).rstrip() + "\n"
    with open(out_path, "w") as fh:
        fh.write(text)
    return out_path
