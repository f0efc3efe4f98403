"""Noise filtering and polishing on completed (imputed) matrices.

Two families, each in a standard and a ranking-driven variant:

- Filtering drops suspect rows. The standard filter (sfil) drops rows
  misclassified by cross-validated decision trees (majority over 3 fold
  shuffles); the ranked filter (pfil) drops the top-fraction rows of a
  pairwise attribute-deviation score (panda_scores).
- Polishing rewrites suspect rows attribute by attribute. The suspect set
  comes from the matching filter; each attribute of a suspect row is
  re-predicted by a depth-5 tree trained on the clean rows (regression tree
  for continuous columns, classification tree over one-hot groups), using
  all other attributes plus the label as features.

The deviation ranking uses quartile bins with inverted-CDF quantiles and
population standard deviations, which makes scores exactly invariant under
row duplication and row permutation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .evaluation import fit_tree, predict_proba, stratified_folds


class CleaningError(ValueError):
    """Cleaning precondition violated (class emptied, clean set too small...)."""


# -------------------------------------------------------------- noise ranking


@dataclass(frozen=True)
class NoiseRanking:
    """Per-row noise scores and the row order they induce (descending score,
    ties broken by ascending row index)."""

    scores: np.ndarray
    ranking: np.ndarray

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "score", "rank"])
            rank_of = np.empty(self.scores.shape[0], dtype=np.int64)
            rank_of[self.ranking] = np.arange(self.scores.shape[0])
            for i, s in enumerate(self.scores):
                writer.writerow([i, f"{s:.6f}", int(rank_of[i])])


def panda_scores(x: np.ndarray) -> NoiseRanking:
    """Pairwise attribute-deviation noise scores.

    For every ordered column pair (j, k), rows are cut into quartile bins of
    column j; row i deviates by |x[i,k] - bin_mean_k| / bin_std_k within its
    bin (zero where the bin is constant). Scores sum the deviations over all
    pairs, so rows that sit far from their peers across many attribute
    slices score high.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise CleaningError("need a complete matrix with at least 2 columns")
    if not np.isfinite(x).all():
        raise CleaningError("matrix contains non-finite cells")
    n, d = x.shape
    scores = np.zeros(n)
    for j in range(d):
        edges = np.quantile(x[:, j], (0.25, 0.5, 0.75), method="inverted_cdf")
        bins = (
            (x[:, j] > edges[0]).astype(np.int64)
            + (x[:, j] > edges[1])
            + (x[:, j] > edges[2])
        )
        for b in range(4):
            members = bins == b
            if not members.any():
                continue
            sub = x[members]
            means = sub.mean(axis=0)
            # two-pass variance (population), with exact constant detection so
            # constant bins contribute exactly zero deviation
            stds = np.sqrt(((sub - means) ** 2).mean(axis=0))
            constant = sub.max(axis=0) == sub.min(axis=0)
            dev = np.abs(sub - means)
            with np.errstate(divide="ignore", invalid="ignore"):
                dev = np.where(constant | (stds == 0.0), 0.0, dev / stds)
            scores[members] += dev.sum(axis=1) - dev[:, j]  # ordered pairs, k != j
    order = np.lexsort((np.arange(n), -scores))
    return NoiseRanking(scores=scores, ranking=order.astype(np.int64))


# ------------------------------------------------------------------ filtering


def _check_kept(labels: np.ndarray, keep: np.ndarray, op: str) -> None:
    if keep.size == 0:
        raise CleaningError(f"{op}: filtering removed every row")
    kept_classes = set(np.unique(labels[keep]).tolist())
    if kept_classes != set(np.unique(labels).tolist()):
        raise CleaningError(f"{op}: filtering would empty a class")


def misclassified_votes(
    x: np.ndarray,
    labels: np.ndarray,
    seed: int = 0,
    n_folds: int = 5,
    vote_seeds: int = 3,
    max_depth: int = 8,
    min_leaf: int = 5,
) -> np.ndarray:
    """Rows misclassified by a majority of cross-validated tree runs.

    Each vote refits trees over a reshuffled stratified fold split; a row is
    flagged when at least ceil(vote_seeds/2 + 0.5) runs misclassify it."""
    labels = np.asarray(labels).astype(np.int64)
    votes = np.zeros(labels.shape[0], dtype=np.int64)
    for t in range(vote_seeds):
        folds = stratified_folds(labels, n_folds, seed=seed * vote_seeds + t)
        for fold in folds:
            train = np.ones(labels.shape[0], dtype=bool)
            train[fold] = False
            tree = fit_tree(x[train], labels[train], max_depth=max_depth, min_leaf=min_leaf)
            pred = np.argmax(predict_proba(tree, x[fold]), axis=1)
            votes[fold] += pred != labels[fold]
    return votes > vote_seeds / 2.0


def sfil(
    x: np.ndarray,
    labels: np.ndarray,
    seed: int = 0,
    n_folds: int = 5,
    vote_seeds: int = 3,
    max_depth: int = 8,
    min_leaf: int = 5,
) -> np.ndarray:
    """Standard filtering: keep rows not flagged by misclassified_votes.

    Returns the sorted indices of rows to keep; errors if the kept set is
    empty or loses a class."""
    labels = np.asarray(labels).astype(np.int64)
    flagged = misclassified_votes(
        x, labels, seed=seed, n_folds=n_folds, vote_seeds=vote_seeds,
        max_depth=max_depth, min_leaf=min_leaf,
    )
    keep = np.flatnonzero(~flagged)
    _check_kept(labels, keep, "sfil")
    return keep


def pfil(x: np.ndarray, labels: np.ndarray, fraction: float = 0.1) -> np.ndarray:
    """Ranked filtering: drop the floor(fraction * n) highest-scored rows.

    Returns the sorted indices of rows to keep; errors if the kept set is
    empty or loses a class."""
    if not 0.0 < fraction < 0.5:
        raise CleaningError(f"fraction must be in (0, 0.5), got {fraction}")
    labels = np.asarray(labels).astype(np.int64)
    ranking = panda_scores(x).ranking
    n_remove = int(np.floor(fraction * x.shape[0]))
    removed = set(ranking[:n_remove].tolist())
    keep = np.array([i for i in range(x.shape[0]) if i not in removed], dtype=np.int64)
    _check_kept(labels, keep, "pfil")
    return keep


# ------------------------------------------------------------------ polishing


@dataclass
class _RegNode:
    column: int = -1
    threshold: float = 0.0
    left: "_RegNode | None" = None
    right: "_RegNode | None" = None
    value: float | None = None


def _best_variance_cut(col: np.ndarray, y: np.ndarray, min_leaf: int):
    n = col.shape[0]
    order = np.argsort(col, kind="stable")
    xs = col[order]
    ys = y[order]
    prefix = np.cumsum(ys)
    prefix_sq = np.cumsum(ys * ys)
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    sum_l, sum_r = prefix[:-1], prefix[-1] - prefix[:-1]
    sq_l, sq_r = prefix_sq[:-1], prefix_sq[-1] - prefix_sq[:-1]
    sse = (sq_l - sum_l**2 / nl) + (sq_r - sum_r**2 / nr)
    valid = (xs[:-1] < xs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    sse = np.where(valid, sse, np.inf)
    i = int(np.argmin(sse))
    lo, hi = xs[i], xs[i + 1]
    thr = (lo + hi) / 2.0
    if thr >= hi:
        thr = lo
    return float(sse[i]), float(thr)


def _grow_reg(x: np.ndarray, y: np.ndarray, depth: int, max_depth: int, min_leaf: int) -> _RegNode:
    node = _RegNode()
    if depth >= max_depth or y.shape[0] < 2 * min_leaf or np.ptp(y) == 0.0:
        node.value = float(y.mean())
        return node
    best = None
    for j in range(x.shape[1]):
        cut = _best_variance_cut(x[:, j], y, min_leaf)
        if cut is None:
            continue
        if best is None or cut[0] < best[0]:
            best = (cut[0], j, cut[1])
    if best is None:
        node.value = float(y.mean())
        return node
    _, j, thr = best
    go_left = x[:, j] <= thr
    node.column = j
    node.threshold = thr
    node.left = _grow_reg(x[go_left], y[go_left], depth + 1, max_depth, min_leaf)
    node.right = _grow_reg(x[~go_left], y[~go_left], depth + 1, max_depth, min_leaf)
    return node


def _predict_reg(node: _RegNode, x: np.ndarray) -> np.ndarray:
    out = np.empty(x.shape[0])
    stack = [(node, np.arange(x.shape[0]))]
    while stack:
        cur, idx = stack.pop()
        if idx.size == 0:
            continue
        if cur.value is not None:
            out[idx] = cur.value
            continue
        go_left = x[idx, cur.column] <= cur.threshold
        stack.append((cur.left, idx[go_left]))
        stack.append((cur.right, idx[~go_left]))
    return out


def _polish(
    x: np.ndarray,
    labels: np.ndarray,
    noisy: np.ndarray,
    groups: Sequence[Sequence[int]],
    max_depth: int,
    min_leaf: int,
    min_clean: int,
) -> np.ndarray:
    n = x.shape[0]
    clean = np.setdiff1d(np.arange(n), noisy)
    if clean.shape[0] < min_clean:
        raise CleaningError(
            f"clean set has {clean.shape[0]} rows, fewer than {min_clean} "
            f"needed to train polishers"
        )
    out = x.copy()
    if noisy.size == 0:
        return out
    lab = np.asarray(labels, dtype=np.float64)
    for group in groups:
        group = list(group)
        feat_cols = [c for c in range(x.shape[1]) if c not in group]
        f_clean = np.column_stack([x[clean][:, feat_cols], lab[clean]])
        f_noisy = np.column_stack([x[noisy][:, feat_cols], lab[noisy]])
        if len(group) == 1:
            tree = _grow_reg(f_clean, x[clean, group[0]], 0, max_depth, min_leaf)
            pred = np.clip(_predict_reg(tree, f_noisy), 0.0, 1.0)
            for row, value in zip(noisy, pred):
                if value != out[row, group[0]]:
                    out[row, group[0]] = value
        else:
            classes = np.argmax(x[clean][:, group], axis=1)
            if np.unique(classes).shape[0] < 2:
                pred_class = np.full(noisy.shape[0], classes[0])
            else:
                tree = fit_tree(f_clean, classes, max_depth=max_depth, min_leaf=min_leaf)
                pred_class = np.argmax(predict_proba(tree, f_noisy), axis=1)
            current = np.argmax(x[noisy][:, group], axis=1)
            for row, cur, new in zip(noisy, current, pred_class):
                if new != cur:  # category unchanged -> leave the encoding alone
                    out[row, group] = 0.0
                    out[row, group[new]] = 1.0
    return out


def _default_groups(d: int) -> list[list[int]]:
    return [[c] for c in range(d)]


def spol(
    x: np.ndarray,
    labels: np.ndarray,
    groups: Sequence[Sequence[int]] | None = None,
    seed: int = 0,
    max_depth: int = 5,
    min_leaf: int = 5,
    min_clean: int = 20,
) -> np.ndarray:
    """Standard polishing: rewrite rows flagged by misclassified_votes.

    groups lists the encoded-column indices of each attribute (singleton for
    continuous, the one-hot block for categorical); None treats every column
    as its own continuous attribute."""
    labels = np.asarray(labels).astype(np.int64)
    flagged = misclassified_votes(x, labels, seed=seed)
    noisy = np.flatnonzero(flagged)
    if groups is None:
        groups = _default_groups(x.shape[1])
    return _polish(x, labels, noisy, groups, max_depth, min_leaf, min_clean)


def ppol(
    x: np.ndarray,
    labels: np.ndarray,
    fraction: float = 0.1,
    groups: Sequence[Sequence[int]] | None = None,
    max_depth: int = 5,
    min_leaf: int = 5,
    min_clean: int = 20,
) -> np.ndarray:
    """Ranked polishing: rewrite the top-fraction rows of panda_scores."""
    if not 0.0 < fraction < 0.5:
        raise CleaningError(f"fraction must be in (0, 0.5), got {fraction}")
    labels = np.asarray(labels).astype(np.int64)
    ranking = panda_scores(x).ranking
    n_remove = int(np.floor(fraction * x.shape[0]))
    noisy = np.sort(ranking[:n_remove])
    if groups is None:
        groups = _default_groups(x.shape[1])
    return _polish(x, labels, noisy, groups, max_depth, min_leaf, min_clean)


def save_indices_csv(path: str, name: str, indices: np.ndarray) -> None:
    """Write a one-column CSV of row indices (flagged or kept lists)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([name])
        for i in indices:
            writer.writerow([int(i)])
