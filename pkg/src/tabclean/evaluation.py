"""Decision-tree cross-validation, rank metrics, and Welch significance tests.

The classifier is a from-scratch CART: greedy Gini splits, depth and leaf-size
limits, class-probability leaves. Fitting is fully deterministic; split ties
break to the lowest column index, then the lowest threshold. Metrics are
balanced accuracy (mean per-class recall) and AUC computed by the midrank
Mann-Whitney formula, which matches a trapezoidal ROC sweep with ties
contributing half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


class EvaluationError(ValueError):
    """Inputs violate an evaluation precondition (class counts, shapes, ...)."""


# ------------------------------------------------------------------ CART tree


@dataclass
class TreeNode:
    """Internal node (column, threshold, children) or leaf (probs set)."""

    column: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    probs: np.ndarray | None = None


@dataclass(frozen=True)
class CartTree:
    root: TreeNode
    n_classes: int
    max_depth: int
    min_leaf: int


def _gini_scores(x_col: np.ndarray, y: np.ndarray, n_classes: int, min_leaf: int):
    """Best valid cut of one column: (weighted Gini, threshold) or None.

    Cuts are evaluated between consecutive distinct sorted values via prefix
    class counts; the lowest-impurity cut wins, ties to the lowest threshold.
    """
    n = x_col.shape[0]
    order = np.argsort(x_col, kind="stable")
    xs = x_col[order]
    ys = y[order]
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), ys] = 1.0
    prefix = np.cumsum(onehot, axis=0)
    total = prefix[-1]
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    left = prefix[:-1]
    right = total - left
    valid = (xs[:-1] < xs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    gini_l = 1.0 - ((left / nl[:, None]) ** 2).sum(axis=1)
    gini_r = 1.0 - ((right / nr[:, None]) ** 2).sum(axis=1)
    score = (nl * gini_l + nr * gini_r) / n
    score[~valid] = np.inf
    i = int(np.argmin(score))  # first minimum: lowest threshold on ties
    lo, hi = xs[i], xs[i + 1]
    thr = (lo + hi) / 2.0
    if thr >= hi:  # guard against midpoint rounding onto the upper value
        thr = lo
    return float(score[i]), float(thr)


def _grow(x: np.ndarray, y: np.ndarray, n_classes: int, depth: int, max_depth: int, min_leaf: int) -> TreeNode:
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    node = TreeNode()
    pure = (counts > 0).sum() <= 1
    if depth >= max_depth or pure or y.shape[0] < 2 * min_leaf:
        node.probs = counts / counts.sum()
        return node
    best = None
    for j in range(x.shape[1]):
        cut = _gini_scores(x[:, j], y, n_classes, min_leaf)
        if cut is None:
            continue
        score, thr = cut
        if best is None or score < best[0]:  # strict: lowest column wins ties
            best = (score, j, thr)
    if best is None:
        node.probs = counts / counts.sum()
        return node
    _, j, thr = best
    go_left = x[:, j] <= thr
    node.column = j
    node.threshold = thr
    node.left = _grow(x[go_left], y[go_left], n_classes, depth + 1, max_depth, min_leaf)
    node.right = _grow(x[~go_left], y[~go_left], n_classes, depth + 1, max_depth, min_leaf)
    return node


def fit_tree(
    x: np.ndarray,
    labels: np.ndarray,
    max_depth: int = 8,
    min_leaf: int = 5,
) -> CartTree:
    """Fit a CART classifier. labels are integers 0..k-1 with at least two
    classes present; the evaluation harness only ever passes binary labels,
    but attribute polishing reuses the tree with more classes."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise EvaluationError(f"bad shapes: x {x.shape}, labels {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        y = y.astype(np.int64)
    if y.min() < 0:
        raise EvaluationError("labels must be non-negative integers")
    n_classes = int(y.max()) + 1
    if np.unique(y).shape[0] < 2:
        raise EvaluationError("single-class input: nothing to split on")
    root = _grow(x, y, n_classes, 0, max_depth, min_leaf)
    return CartTree(root=root, n_classes=n_classes, max_depth=max_depth, min_leaf=min_leaf)


def predict_proba(tree: CartTree, x: np.ndarray) -> np.ndarray:
    """Per-row class-probability vectors, shape (n_rows, n_classes)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((x.shape[0], tree.n_classes))
    stack = [(tree.root, np.arange(x.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.probs is not None:
            out[idx] = node.probs
            continue
        go_left = x[idx, node.column] <= node.threshold
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out


# -------------------------------------------------------------------- metrics


def balanced_accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Mean of the two per-class recalls; both classes must appear in y_true."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise EvaluationError("y_true and y_pred length mismatch")
    recalls = []
    for cls in (0, 1):
        members = y_true == cls
        if not members.any():
            raise EvaluationError(f"class {cls} absent from y_true")
        recalls.append(float((y_pred[members] == cls).mean()))
    return float(np.mean(recalls))


def roc_auc(y_true: np.ndarray, scores: np.ndarray) -> float:
    """Area under the ROC curve via midranks (ties count half), identical to
    a trapezoidal sweep over all score thresholds."""
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    if y_true.shape != scores.shape:
        raise EvaluationError("y_true and scores length mismatch")
    n_pos = int((y_true == 1).sum())
    n_neg = int((y_true == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.shape[0], dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < sorted_scores.shape[0]:
        j = i
        while j + 1 < sorted_scores.shape[0] and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # average of 1-based ranks
        i = j + 1
    rank_sum = ranks[y_true == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# -------------------------------------------------------------- stratified CV


def stratified_folds(labels: np.ndarray, n_folds: int, seed: int = 0) -> list[np.ndarray]:
    """Shuffle each class and deal round-robin; per-class fold counts differ
    by at most one, so fold class ratios stay within one instance of global."""
    labels = np.asarray(labels)
    if n_folds < 2:
        raise EvaluationError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.shape[0] < n_folds:
            raise EvaluationError(
                f"class {cls} has {idx.shape[0]} rows, fewer than {n_folds} folds"
            )
        rng.shuffle(idx)
        for f in range(n_folds):
            folds[f].extend(idx[f::n_folds].tolist())
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


@dataclass(frozen=True)
class EvalReport:
    """Aggregate metrics plus the per-fold values they average."""

    balanced_accuracy: float
    auc: float
    fold_balanced_accuracy: tuple[float, ...]
    fold_auc: tuple[float, ...]
    n_folds: int


def cv_evaluate(
    x: np.ndarray,
    labels: np.ndarray,
    n_folds: int = 5,
    seeds: Sequence[int] = (0,),
    max_depth: int = 8,
    min_leaf: int = 5,
) -> EvalReport:
    """Stratified k-fold CV of a CART classifier on (x, labels).

    For every seed the folds are reshuffled; each fold is scored by a tree
    fit on the remaining rows. Predicted class is the argmax of the leaf
    probabilities (ties to the lower class index); AUC uses the class-1
    probability as the score. Aggregates are means over all folds and seeds.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    uniq = np.unique(labels)
    if not set(uniq.tolist()) <= {0, 1} or uniq.shape[0] < 2:
        raise EvaluationError("cv_evaluate expects binary 0/1 labels, both present")
    fold_bal, fold_auc = [], []
    for seed in seeds:
        folds = stratified_folds(labels, n_folds, seed=seed)
        for f in range(n_folds):
            test_idx = folds[f]
            train_mask = np.ones(labels.shape[0], dtype=bool)
            train_mask[test_idx] = False
            tree = fit_tree(x[train_mask], labels[train_mask], max_depth=max_depth, min_leaf=min_leaf)
            probs = predict_proba(tree, x[test_idx])
            y_pred = np.argmax(probs, axis=1)
            scores = probs[:, 1]
            fold_bal.append(balanced_accuracy(labels[test_idx], y_pred))
            fold_auc.append(roc_auc(labels[test_idx], scores))
    return EvalReport(
        balanced_accuracy=float(np.mean(fold_bal)),
        auc=float(np.mean(fold_auc)),
        fold_balanced_accuracy=tuple(fold_bal),
        fold_auc=tuple(fold_auc),
        n_folds=n_folds,
    )


# ----------------------------------------------------------------- Welch test


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz method)."""
    max_iter, eps, fpmin = 300, 3e-14, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def _reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def welch_ttest(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided Welch (unequal-variance) p-value.

    Degrees of freedom follow Welch-Satterthwaite; the Student-t tail is
    P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2). Convention for the degenerate
    case of two constant samples: p=1 when their means are equal, p=0
    otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise EvaluationError("welch_ttest needs at least 2 values per sample")
    mean_a, mean_b = float(a.mean()), float(b.mean())
    var_a = float(a.var(ddof=1))
    var_b = float(b.var(ddof=1))
    if var_a == 0.0 and var_b == 0.0:
        return 1.0 if mean_a == mean_b else 0.0
    se_a, se_b = var_a / a.shape[0], var_b / b.shape[0]
    t = (mean_a - mean_b) / math.sqrt(se_a + se_b)
    df = (se_a + se_b) ** 2 / (
        (se_a**2 / (a.shape[0] - 1)) + (se_b**2 / (b.shape[0] - 1))
    )
    return _reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))


# ---------------------------------------------------------- significance marks

BETTER, EVEN, WORSE = "better", "even", "worse"
MARK_SYMBOLS = {BETTER: "•", EVEN: "≡", WORSE: "◦"}


@dataclass(frozen=True)
class SignificanceMark:
    """Outcome of comparing our metric samples against a baseline's."""

    mark: str
    p_value: float
    mean_ours: float
    mean_theirs: float

    @property
    def symbol(self) -> str:
        return MARK_SYMBOLS[self.mark]


def _record_field(record, name: str):
    if isinstance(record, Mapping):
        return record[name]
    return getattr(record, name)


def mark_significance(
    ours: Sequence,
    theirs: Sequence,
    metric: str,
    alpha: float = 0.05,
) -> SignificanceMark:
    """Welch-test two groups of run records on one metric field.

    Records may be dataclasses or mappings; they must all share the same
    dataset and noise_rate (same experimental cell) and the two groups must
    have equal counts. Higher metric values count as better.
    """
    if len(ours) != len(theirs):
        raise EvaluationError(
            f"run count mismatch: {len(ours)} vs {len(theirs)} records"
        )
    cells = {
        (_record_field(r, "dataset"), _record_field(r, "noise_rate"))
        for r in list(ours) + list(theirs)
    }
    if len(cells) != 1:
        raise EvaluationError(f"records span multiple experimental cells: {sorted(cells)}")
    sample_ours = [float(_record_field(r, metric)) for r in ours]
    sample_theirs = [float(_record_field(r, metric)) for r in theirs]
    if not (np.isfinite(sample_ours).all() and np.isfinite(sample_theirs).all()):
        raise EvaluationError("non-finite metric value in records")
    p = welch_ttest(sample_ours, sample_theirs)
    mean_ours = float(np.mean(sample_ours))
    mean_theirs = float(np.mean(sample_theirs))
    if p >= alpha:
        mark = EVEN
    else:
        mark = BETTER if mean_ours > mean_theirs else WORSE
    return SignificanceMark(
        mark=mark, p_value=p, mean_ours=mean_ours, mean_theirs=mean_theirs
    )
