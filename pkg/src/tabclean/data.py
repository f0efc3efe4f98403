"""Mixed-type tabular datasets with explicit missingness.

A dataset is a grid of cells where each cell is either present or missing,
plus a per-feature schema (continuous or categorical). Continuous features
are min-max scaled to [0, 1] for model consumption, categoricals are one-hot
encoded, and missing cells become a neutral 0.5 placeholder together with a
0/1 observation mask.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

PLACEHOLDER = 0.5

DEFAULT_MISSING_TOKENS = ("", "?", "NA")


class SchemaError(ValueError):
    """A file, cell value, or schema definition violates the declared contract."""


class ConstantFeatureWarning(UserWarning):
    """A continuous feature has a single observed value and encodes to all 0.5."""


@dataclass(frozen=True)
class FeatureSpec:
    """Schema entry for one attribute.

    For continuous features, observed_min/observed_max hold the value range
    seen in the data (filled in by Dataset.build); scaling uses these bounds.
    For categorical features, categories is the ordered tuple of admissible
    category names.
    """

    name: str
    kind: str
    categories: tuple[str, ...] | None = None
    observed_min: float | None = None
    observed_max: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.categories:
                raise SchemaError(f"feature {self.name!r}: categorical without categories")
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"feature {self.name!r}: duplicate categories")
        elif self.categories is not None:
            raise SchemaError(f"feature {self.name!r}: continuous feature lists categories")
        if (
            self.observed_min is not None
            and self.observed_max is not None
            and self.observed_min > self.observed_max
        ):
            raise SchemaError(f"feature {self.name!r}: observed_min > observed_max")


@dataclass(frozen=True)
class Dataset:
    """Immutable table of raw cells plus schema and optional binary labels.

    cells is an (n_rows, n_features) object array; missing cells hold None.
    observed is the matching boolean mask (True where a value is present).
    Construct through Dataset.build, which validates cells against the schema
    and fills in observed value ranges for continuous features.
    """

    specs: tuple[FeatureSpec, ...]
    cells: np.ndarray
    observed: np.ndarray
    labels: np.ndarray | None = None

    @property
    def n_rows(self) -> int:
        return self.cells.shape[0]

    @property
    def n_features(self) -> int:
        return self.cells.shape[1]

    @classmethod
    def build(
        cls,
        specs: Sequence[FeatureSpec],
        cells: np.ndarray | Sequence[Sequence[object]],
        labels: np.ndarray | Sequence[int] | None = None,
    ) -> "Dataset":
        """Validate cells against specs, compute observed ranges, and freeze."""
        grid = np.empty(
            (len(cells), len(specs)) if not isinstance(cells, np.ndarray) else cells.shape,
            dtype=object,
        )
        grid[...] = cells
        if grid.ndim != 2 or grid.shape[1] != len(specs):
            raise SchemaError(
                f"cells shape {grid.shape} does not match {len(specs)} features"
            )
        n_rows = grid.shape[0]
        observed = np.empty(grid.shape, dtype=bool)
        for i in range(n_rows):
            for j in range(grid.shape[1]):
                observed[i, j] = grid[i, j] is not None

        resolved = []
        for j, spec in enumerate(specs):
            col = grid[:, j]
            obs = col[observed[:, j]]
            if spec.kind == CONTINUOUS:
                vals = []
                for v in obs:
                    if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
                        raise SchemaError(
                            f"feature {spec.name!r}: non-numeric cell {v!r}"
                        )
                    if not np.isfinite(v):
                        raise SchemaError(f"feature {spec.name!r}: non-finite cell {v!r}")
                    vals.append(float(v))
                lo = min(vals) if vals else None
                hi = max(vals) if vals else None
                resolved.append(replace(spec, observed_min=lo, observed_max=hi))
                for i, v in zip(np.flatnonzero(observed[:, j]), vals):
                    grid[i, j] = v
            else:
                allowed = set(spec.categories or ())
                for v in obs:
                    if v not in allowed:
                        raise SchemaError(
                            f"feature {spec.name!r}: value {v!r} not among categories"
                        )
                resolved.append(spec)

        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (n_rows,):
                raise SchemaError(
                    f"labels shape {labels.shape} does not match {n_rows} rows"
                )
            uniq = set(np.unique(labels).tolist())
            if not uniq <= {0, 1}:
                raise SchemaError(f"labels must be binary 0/1, got values {sorted(uniq)}")
            if len(uniq) < 2:
                raise SchemaError("labels must contain both classes")
            labels = labels.astype(np.int64)
            labels.setflags(write=False)

        grid.setflags(write=False)
        observed.setflags(write=False)
        return cls(specs=tuple(resolved), cells=grid, observed=observed, labels=labels)

    def is_complete(self) -> bool:
        return bool(self.observed.all())


@dataclass(frozen=True)
class ColumnRef:
    """Maps one encoded column back to its feature (and category, if one-hot)."""

    feature: int
    category: int | None = None


@dataclass(frozen=True)
class EncodedMatrix:
    """Float view of a dataset: values in [0, 1], 0/1 mask, column provenance.

    mask is 1.0 where the underlying raw cell was observed and 0.0 where it
    was missing; every encoded column of a one-hot group shares the mask bit
    of its raw cell. values holds PLACEHOLDER at masked-out positions.
    """

    values: np.ndarray
    mask: np.ndarray
    column_map: tuple[ColumnRef, ...]
    specs: tuple[FeatureSpec, ...]

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def column_groups(self) -> list[list[int]]:
        """Encoded column indices grouped per raw feature, in feature order."""
        groups: list[list[int]] = [[] for _ in self.specs]
        for c, ref in enumerate(self.column_map):
            groups[ref.feature].append(c)
        return groups


def encoded_width(specs: Sequence[FeatureSpec]) -> int:
    """Number of encoded columns a schema produces."""
    return sum(
        1 if s.kind == CONTINUOUS else len(s.categories or ()) for s in specs
    )


def encode(ds: Dataset, specs: Sequence[FeatureSpec] | None = None) -> EncodedMatrix:
    """Encode a dataset to a [0, 1] matrix with an observation mask.

    specs overrides the scaling schema (the category sets and continuous
    ranges used), which lets two datasets over the same attributes be encoded
    on a common scale. Values outside an overridden range are clamped.
    """
    specs = tuple(specs) if specs is not None else ds.specs
    if len(specs) != ds.n_features:
        raise SchemaError("override specs length does not match dataset features")
    n = ds.n_rows
    cols: list[np.ndarray] = []
    mask_cols: list[np.ndarray] = []
    column_map: list[ColumnRef] = []
    for j, spec in enumerate(specs):
        obs = ds.observed[:, j]
        if spec.kind == CONTINUOUS:
            lo, hi = spec.observed_min, spec.observed_max
            if lo is None or hi is None or not obs.any():
                raise SchemaError(
                    f"feature {spec.name!r}: no observed values to scale against"
                )
            raw = np.array([v if o else 0.0 for v, o in zip(ds.cells[:, j], obs)], dtype=np.float64)
            if hi > lo:
                scaled = np.clip((raw - lo) / (hi - lo), 0.0, 1.0)
            else:
                warnings.warn(
                    f"feature {spec.name!r} is constant; encoding as all {PLACEHOLDER}",
                    ConstantFeatureWarning,
                    stacklevel=2,
                )
                scaled = np.full(n, PLACEHOLDER)
            scaled[~obs] = PLACEHOLDER
            cols.append(scaled)
            mask_cols.append(obs.astype(np.float64))
            column_map.append(ColumnRef(feature=j))
        else:
            cats = spec.categories or ()
            index = {c: k for k, c in enumerate(cats)}
            block = np.full((n, len(cats)), PLACEHOLDER)
            for i in range(n):
                if obs[i]:
                    v = ds.cells[i, j]
                    if v not in index:
                        raise SchemaError(
                            f"feature {spec.name!r}: value {v!r} not among categories"
                        )
                    block[i, :] = 0.0
                    block[i, index[v]] = 1.0
            m = np.repeat(obs.astype(np.float64)[:, None], len(cats), axis=1)
            for k in range(len(cats)):
                cols.append(block[:, k])
                mask_cols.append(m[:, k])
                column_map.append(ColumnRef(feature=j, category=k))
    values = np.column_stack(cols) if cols else np.zeros((n, 0))
    mask = np.column_stack(mask_cols) if mask_cols else np.zeros((n, 0))
    return EncodedMatrix(
        values=values, mask=mask, column_map=tuple(column_map), specs=specs
    )


def decode(m: EncodedMatrix, specs: Sequence[FeatureSpec] | None = None) -> Dataset:
    """Decode an encoded matrix back to a complete raw-valued dataset.

    Continuous columns invert the min-max scaling; one-hot groups pick the
    category with the largest value (ties go to the lowest category index).
    The result has no missing cells regardless of the input mask.
    """
    specs = tuple(specs) if specs is not None else m.specs
    if specs != m.specs:
        raise SchemaError("decode specs do not match the matrix column_map schema")
    n = m.n_rows
    cells = np.empty((n, len(specs)), dtype=object)
    for j, group in enumerate(m.column_groups()):
        spec = specs[j]
        if spec.kind == CONTINUOUS:
            lo, hi = spec.observed_min, spec.observed_max
            if lo is None or hi is None:
                raise SchemaError(f"feature {spec.name!r}: missing scaling range")
            col = m.values[:, group[0]]
            raw = lo + col * (hi - lo) if hi > lo else np.full(n, lo)
            for i in range(n):
                cells[i, j] = float(raw[i])
        else:
            cats = spec.categories or ()
            block = m.values[:, group]
            picks = np.argmax(block, axis=1)  # first max wins: lowest index on ties
            for i in range(n):
                cells[i, j] = cats[picks[i]]
    return Dataset.build(specs, cells)


def load_csv(
    path: str,
    specs: Sequence[FeatureSpec],
    missing_tokens: Sequence[str] = DEFAULT_MISSING_TOKENS,
    label_column: str | None = None,
) -> Dataset:
    """Read a CSV file against a declared schema.

    The header must list the schema's feature names in order, with the label
    column (if any) allowed at any position. Cell tokens are stripped of
    surrounding whitespace; a token in missing_tokens becomes a missing cell.
    Unparseable or out-of-vocabulary cells raise SchemaError naming the data
    row (1-based) and column.
    """
    missing = set(missing_tokens)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        label_idx = None
        if label_column is not None:
            if header.count(label_column) != 1:
                raise SchemaError(
                    f"{path}: label column {label_column!r} not found exactly once"
                )
            label_idx = header.index(label_column)
        feature_header = [h for i, h in enumerate(header) if i != label_idx]
        expected = [s.name for s in specs]
        if feature_header != expected:
            raise SchemaError(
                f"{path}: header {feature_header} does not match schema {expected}"
            )

        rows: list[list[object]] = []
        labels: list[int] = []
        for r, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise SchemaError(f"{path}: row {r} has {len(record)} fields, expected {len(header)}")
            if label_idx is not None:
                token = record[label_idx].strip()
                try:
                    lab = int(float(token))
                except ValueError:
                    raise SchemaError(
                        f"{path}: row {r} column {label_column!r}: bad label {token!r}"
                    ) from None
                if lab not in (0, 1) or float(token) != lab:
                    raise SchemaError(
                        f"{path}: row {r} column {label_column!r}: label must be 0 or 1"
                    )
                labels.append(lab)
            fields = [f for i, f in enumerate(record) if i != label_idx]
            parsed: list[object] = []
            for spec, token in zip(specs, fields):
                token = token.strip()
                if token in missing:
                    parsed.append(None)
                elif spec.kind == CONTINUOUS:
                    try:
                        parsed.append(float(token))
                    except ValueError:
                        raise SchemaError(
                            f"{path}: row {r} column {spec.name!r}: "
                            f"cannot parse {token!r} as a number"
                        ) from None
                else:
                    if token not in (spec.categories or ()):
                        raise SchemaError(
                            f"{path}: row {r} column {spec.name!r}: "
                            f"value {token!r} not among categories"
                        )
                    parsed.append(token)
            rows.append(parsed)

    if not rows:
        raise SchemaError(f"{path}: no data rows")
    cells = np.empty((len(rows), len(specs)), dtype=object)
    for i, row in enumerate(rows):
        cells[i, :] = row
    ds = Dataset.build(specs, cells, labels=labels if label_idx is not None else None)
    logger.info("loaded %s: %d rows, %d features", path, ds.n_rows, ds.n_features)
    return ds


def save_csv(
    ds: Dataset,
    path: str,
    missing_token: str = "",
    label_column: str = "label",
) -> None:
    """Write a dataset to CSV, rendering missing cells as missing_token."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [s.name for s in ds.specs]
        if ds.labels is not None:
            header.append(label_column)
        writer.writerow(header)
        for i in range(ds.n_rows):
            row = []
            for j in range(ds.n_features):
                v = ds.cells[i, j]
                if v is None:
                    row.append(missing_token)
                elif ds.specs[j].kind == CONTINUOUS:
                    row.append(repr(float(v)))
                else:
                    row.append(str(v))
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            writer.writerow(row)


def synth_generate(
    n_rows: int,
    n_continuous: int,
    n_categorical: int,
    missing_rate: float = 0.0,
    seed: int = 0,
) -> tuple[Dataset, Dataset]:
    """Generate a correlated mixed-type dataset with binary labels.

    Rows are driven by a 3-dimensional latent factor: continuous features are
    noisy linear mixes of the factors, categorical features are quantile bins
    of further mixes (2 to 4 categories each), and the label thresholds yet
    another mix at its median so both classes always appear. missing_rate
    cells are then blanked uniformly at random (every column keeps at least
    one observed cell). Returns (dataset, ground_truth) where ground_truth is
    the same table before blanking; they are equal when missing_rate is 0.
    """
    if n_rows < 10:
        raise ValueError("n_rows must be at least 10")
    if n_continuous + n_categorical < 1:
        raise ValueError("need at least one feature")
    if not 0.0 <= missing_rate < 1.0:
        raise ValueError("missing_rate must be in [0, 1)")
    rng = np.random.default_rng(seed)
    latent = rng.normal(size=(n_rows, 3))

    specs: list[FeatureSpec] = []
    columns: list[np.ndarray] = []
    for j in range(n_continuous):
        w = rng.normal(size=3)
        col = latent @ w + 0.3 * rng.normal(size=n_rows)
        columns.append(col)
        specs.append(FeatureSpec(name=f"num{j}", kind=CONTINUOUS))
    for j in range(n_categorical):
        w = rng.normal(size=3)
        score = latent @ w + 0.3 * rng.normal(size=n_rows)
        k = int(rng.integers(2, 5))
        cats = tuple(f"c{t}" for t in range(k))
        edges = np.quantile(score, [t / k for t in range(1, k)])
        binned = np.searchsorted(edges, score, side="right")
        columns.append(np.array([cats[b] for b in binned], dtype=object))
        specs.append(FeatureSpec(name=f"cat{j}", kind=CATEGORICAL, categories=cats))

    v = rng.normal(size=3)
    score = latent @ v
    labels = (score > np.median(score)).astype(np.int64)

    d = n_continuous + n_categorical
    complete = np.empty((n_rows, d), dtype=object)
    for j, col in enumerate(columns):
        for i in range(n_rows):
            complete[i, j] = col[i] if specs[j].kind == CATEGORICAL else float(col[i])
    ground_truth = Dataset.build(specs, complete, labels=labels)

    if missing_rate == 0.0:
        return ground_truth, ground_truth

    blank = rng.random((n_rows, d)) < missing_rate
    for j in range(d):
        if blank[:, j].all():
            blank[rng.integers(0, n_rows), j] = False  # keep one observed cell
    cells = complete.copy()
    cells[blank] = None
    return Dataset.build(specs, cells, labels=labels), ground_truth
