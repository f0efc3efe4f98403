"""Tree fitting, metric oracles, CV protocol, Welch test, significance marks."""

import numpy as np
import pytest
import scipy.stats

from tabclean.evaluation import (
    EvaluationError,
    SignificanceMark,
    balanced_accuracy,
    cv_evaluate,
    fit_tree,
    mark_significance,
    predict_proba,
    roc_auc,
    stratified_folds,
    welch_ttest,
)

# ----------------------------------------------------------------------- tree


def test_tree_separable_single_column():
    x = np.array([[0.1], [0.2], [0.3], [0.7], [0.8], [0.9]])
    y = np.array([0, 0, 0, 1, 1, 1])
    tree = fit_tree(x, y, max_depth=8, min_leaf=1)
    preds = np.argmax(predict_proba(tree, x), axis=1)
    assert preds.tolist() == y.tolist()
    # one split suffices: children are pure
    assert tree.root.left.probs is not None
    assert tree.root.right.probs is not None


def test_tree_xor_depth_two():
    # exhaustive-enumeration oracle: no single axis split separates XOR, but
    # any first split followed by splits on the other column classifies all
    # 4 points, so a depth-2 tree reaches training accuracy 1.0
    x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    tree = fit_tree(x, y, max_depth=2, min_leaf=1)
    preds = np.argmax(predict_proba(tree, x), axis=1)
    assert preds.tolist() == y.tolist()


def test_tree_single_class_rejected():
    with pytest.raises(EvaluationError):
        fit_tree(np.zeros((4, 2)), np.array([1, 1, 1, 1]))


def test_tree_deterministic_ties_lowest_column():
    # two identical columns: the split must land on column 0
    col = np.array([0.0, 0.0, 1.0, 1.0])
    x = np.column_stack([col, col])
    y = np.array([0, 0, 1, 1])
    tree = fit_tree(x, y, min_leaf=1)
    assert tree.root.column == 0


def test_tree_respects_min_leaf():
    rng = np.random.default_rng(0)
    x = rng.random((40, 3))
    y = (rng.random(40) < 0.5).astype(int)
    y[:2] = [0, 1]  # both classes guaranteed
    tree = fit_tree(x, y, max_depth=10, min_leaf=7)

    def leaf_sizes(node, idx):
        if node.probs is not None:
            return [idx.sum()]
        go_left = x[idx, node.column] <= node.threshold if idx.dtype == bool else None
        mask = np.zeros(40, dtype=bool)
        mask[idx] = True
        left = mask & (x[:, node.column] <= node.threshold)
        right = mask & ~(x[:, node.column] <= node.threshold)
        return leaf_sizes(node.left, np.flatnonzero(left)) + leaf_sizes(
            node.right, np.flatnonzero(right)
        )

    sizes = leaf_sizes(tree.root, np.arange(40))
    assert min(sizes) >= 7


def test_tree_multiclass_probs():
    x = np.array([[0.0], [1.0], [2.0], [0.1], [1.1], [2.1]])
    y = np.array([0, 1, 2, 0, 1, 2])
    tree = fit_tree(x, y, min_leaf=1)
    probs = predict_proba(tree, x)
    assert probs.shape == (6, 3)
    assert np.argmax(probs, axis=1).tolist() == y.tolist()


# -------------------------------------------------------------------- metrics


def test_balanced_accuracy_all_positive_on_imbalanced():
    # recalls are 1.0 (positives) and 0.0 (negatives): mean is exactly 0.5
    y_true = np.array([1] * 90 + [0] * 10)
    y_pred = np.ones(100, dtype=int)
    assert balanced_accuracy(y_true, y_pred) == 0.5


def test_balanced_accuracy_perfect_and_errors():
    y = np.array([0, 1, 0, 1])
    assert balanced_accuracy(y, y) == 1.0
    with pytest.raises(EvaluationError):
        balanced_accuracy(np.array([1, 1]), np.array([1, 1]))


def test_balanced_accuracy_permutation_symmetry():
    # against shuffled labels a fixed prediction averages to 0.5
    rng = np.random.default_rng(0)
    y_pred = (rng.random(200) < 0.4).astype(int)
    y_true = np.array([0] * 120 + [1] * 80)
    vals = []
    for _ in range(20):
        rng.shuffle(y_true)
        vals.append(balanced_accuracy(y_true, y_pred))
    assert abs(np.mean(vals) - 0.5) < 0.05


def test_auc_hand_cases():
    y = np.array([0, 0, 1, 1])
    assert roc_auc(y, np.array([0.1, 0.2, 0.8, 0.9])) == 1.0
    assert roc_auc(y, np.array([0.9, 0.8, 0.2, 0.1])) == 0.0
    # full tie: every pair contributes 1/2
    assert roc_auc(np.array([0, 1]), np.array([0.5, 0.5])) == 0.5
    # one concordant pair, one tied pair out of 2 pairs: (1 + 0.5) / 2
    assert roc_auc(np.array([0, 0, 1]), np.array([0.3, 0.5, 0.5])) == 0.75


def test_auc_matches_reference_with_ties():
    rng = np.random.default_rng(1)
    for _ in range(20):
        y = (rng.random(60) < 0.5).astype(int)
        if y.min() == y.max():
            continue
        scores = np.round(rng.random(60), 1)  # coarse grid forces ties
        ours = roc_auc(y, scores)
        # Mann-Whitney U relates to AUC by U / (n1 * n0)
        u = scipy.stats.mannwhitneyu(scores[y == 1], scores[y == 0]).statistic
        assert ours == pytest.approx(u / ((y == 1).sum() * (y == 0).sum()), abs=1e-12)


def test_auc_monotone_transform_invariance():
    rng = np.random.default_rng(2)
    y = (rng.random(80) < 0.5).astype(int)
    y[:2] = [0, 1]
    scores = rng.normal(size=80)
    base = roc_auc(y, scores)
    assert roc_auc(y, 3.0 * scores + 1.0) == base
    assert roc_auc(y, np.exp(scores)) == base
    assert roc_auc(y, np.tanh(scores)) == base


def test_auc_random_scores_near_half():
    rng = np.random.default_rng(3)
    vals = []
    for _ in range(10):
        y = np.array([0] * 100 + [1] * 100)
        scores = rng.random(200)
        vals.append(roc_auc(y, scores))
    assert 0.45 <= np.mean(vals) <= 0.55


def test_auc_requires_both_classes():
    with pytest.raises(EvaluationError):
        roc_auc(np.array([1, 1]), np.array([0.1, 0.2]))


# ------------------------------------------------------------------------- CV


def test_stratified_folds_ratio_within_one():
    labels = np.array([0] * 33 + [1] * 17)
    folds = stratified_folds(labels, 5, seed=4)
    assert sorted(np.concatenate(folds).tolist()) == list(range(50))
    for f in folds:
        ones = int(labels[f].sum())
        zeros = f.shape[0] - ones
        assert abs(zeros - 33 / 5) < 1.0 + 1e-9
        assert abs(ones - 17 / 5) < 1.0 + 1e-9


def test_stratified_folds_class_too_small():
    labels = np.array([0] * 20 + [1] * 3)
    with pytest.raises(EvaluationError):
        stratified_folds(labels, 5)


def test_cv_perfect_features():
    rng = np.random.default_rng(5)
    y = np.array([0, 1] * 30)
    x = np.column_stack([y + 0.01 * rng.random(60), rng.random(60)])
    report = cv_evaluate(x, y, n_folds=5, seeds=(0, 1))
    assert report.balanced_accuracy == 1.0
    assert report.auc == 1.0
    assert len(report.fold_auc) == 10  # 5 folds x 2 seeds
    assert report.balanced_accuracy == pytest.approx(
        np.mean(report.fold_balanced_accuracy)
    )


def test_cv_label_independent_features_near_half():
    rng = np.random.default_rng(6)
    y = np.array([0] * 60 + [1] * 60)
    x = rng.random((120, 5))
    report = cv_evaluate(x, y, n_folds=5, seeds=tuple(range(5)))
    assert 0.35 <= report.auc <= 0.65


def test_cv_rejects_small_class():
    x = np.random.default_rng(0).random((10, 2))
    y = np.array([0] * 8 + [1] * 2)
    with pytest.raises(EvaluationError):
        cv_evaluate(x, y, n_folds=5)


def test_cv_deterministic_per_seed():
    rng = np.random.default_rng(7)
    y = (rng.random(80) < 0.5).astype(int)
    y[:2] = [0, 1]
    x = rng.random((80, 4))
    a = cv_evaluate(x, y, seeds=(3,))
    b = cv_evaluate(x, y, seeds=(3,))
    assert a == b


# ------------------------------------------------------------------ Welch test


def test_welch_identical_samples():
    a = [0.6, 0.7, 0.8, 0.9]
    assert welch_ttest(a, list(a)) == pytest.approx(1.0, abs=1e-9)


def test_welch_shifted_unit_lists():
    # frozen oracle (reference Welch computation): p = 0.34659...
    a = [1.0, 2.0, 3.0, 4.0, 5.0]
    b = [2.0, 3.0, 4.0, 5.0, 6.0]
    p = welch_ttest(a, b)
    assert abs(p - 0.3466) < 0.02
    ref = scipy.stats.ttest_ind(a, b, equal_var=False).pvalue
    assert p == pytest.approx(ref, abs=1e-10)


def test_welch_separated_gaussians():
    rng = np.random.default_rng(8)
    a = rng.normal(0.0, 1.0, size=10)
    b = rng.normal(5.0, 1.0, size=10)
    assert welch_ttest(a, b) < 1e-6


def test_welch_matches_reference_broadly():
    rng = np.random.default_rng(9)
    for _ in range(50):
        a = rng.normal(0, 1, size=rng.integers(2, 15))
        b = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2), size=rng.integers(2, 15))
        ours = welch_ttest(a, b)
        ref = scipy.stats.ttest_ind(a, b, equal_var=False).pvalue
        assert ours == pytest.approx(ref, abs=1e-9)


def test_welch_symmetry_exact():
    rng = np.random.default_rng(10)
    a = rng.random(7)
    b = rng.random(9)
    assert welch_ttest(a, b) == welch_ttest(b, a)


def test_welch_constant_conventions():
    assert welch_ttest([2.0, 2.0], [2.0, 2.0]) == 1.0
    assert welch_ttest([2.0, 2.0], [3.0, 3.0]) == 0.0
    with pytest.raises(EvaluationError):
        welch_ttest([1.0], [1.0, 2.0])


# --------------------------------------------------------- significance marks


def rec(dataset, rate, auc):
    return {"dataset": dataset, "noise_rate": rate, "auc": auc}


def test_mark_identical_is_even():
    ours = [rec("d", 0.1, v) for v in (0.7, 0.72, 0.71, 0.69)]
    m = mark_significance(ours, [dict(r) for r in ours], "auc")
    assert m.mark == "even"
    assert m.p_value == pytest.approx(1.0, abs=1e-9)
    assert m.symbol == "≡"


def test_mark_separated_better_and_worse():
    ours = [rec("d", 0.1, 0.9 + e) for e in (0.0, 0.001, -0.001, 0.002)]
    theirs = [rec("d", 0.1, 0.6 + e) for e in (0.0, 0.001, -0.001, 0.002)]
    m = mark_significance(ours, theirs, "auc")
    assert m.mark == "better" and m.symbol == "•"
    m2 = mark_significance(theirs, ours, "auc")
    assert m2.mark == "worse" and m2.symbol == "◦"


def test_mark_overlapping_means_even():
    # oracle: welch p on these samples is far above 0.05
    ours = [rec("d", 0.2, v) for v in (0.68, 0.74, 0.66, 0.72)]
    theirs = [rec("d", 0.2, v) for v in (0.69, 0.75, 0.67, 0.73)]
    assert welch_ttest([0.68, 0.74, 0.66, 0.72], [0.69, 0.75, 0.67, 0.73]) > 0.05
    m = mark_significance(ours, theirs, "auc")
    assert m.mark == "even"


def test_mark_rejects_mismatched_cells():
    ours = [rec("d", 0.1, 0.7), rec("d", 0.1, 0.8)]
    theirs = [rec("d", 0.2, 0.7), rec("d", 0.2, 0.8)]
    with pytest.raises(EvaluationError):
        mark_significance(ours, theirs, "auc")
    with pytest.raises(EvaluationError):
        mark_significance(ours, ours[:1], "auc")


def test_mark_accepts_dataclass_records():
    from dataclasses import dataclass

    @dataclass
    class R:
        dataset: str
        noise_rate: float
        auc: float

    ours = [R("d", 0.0, 0.9), R("d", 0.0, 0.91)]
    theirs = [R("d", 0.0, 0.5), R("d", 0.0, 0.51)]
    assert mark_significance(ours, theirs, "auc").mark == "better"
