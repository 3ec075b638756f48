"""Bagged decision-tree classification with stratified cross-validation.

Trees are grown CART-style on Gini impurity.  Split selection is exact: the
candidate scores are compared as rationals, so ties resolve deterministically
to the lowest feature index and then the smallest threshold, independent of
floating-point noise.  The ensemble votes by majority with ties going to
class 0; every random choice flows from one seeded generator.
"""

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from ._validation import as_matrix
from .errors import EmptyData, TooFewSamples

_NEAR_MAX_ATOL = 1e-9  # float prefilter window before exact rational compare


@dataclass
class FeatureTable:
    """Per-subject feature rows with binary labels and provenance."""

    features: np.ndarray   # (n_subjects, d)
    labels: np.ndarray     # (n_subjects,) in {0, 1}
    provenance: str        # "eigenvalues" | "leading_eigenvector" | "rqa"
    network: str = ""
    subject_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.features = as_matrix(self.features, "features")
        self.labels = np.asarray(self.labels, dtype=int)
        if self.labels.shape[0] != self.features.shape[0]:
            raise ValueError("features and labels must align")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")


@dataclass
class _TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "_TreeNode" = None
    right: "_TreeNode" = None
    proba: np.ndarray = None
    n_samples: int = 0

    @property
    def is_leaf(self):
        return self.left is None


@dataclass
class DecisionTree:
    """A fitted CART tree over binary labels."""

    root: _TreeNode
    max_depth: int = None
    min_leaf: int = 1

    def predict_proba(self, X):
        X = as_matrix(X, "X")
        out = np.empty((X.shape[0], 2), dtype=np.float64)
        for i, row in enumerate(X):
            node = self.root
            while not node.is_leaf:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.proba
        return out

    def predict(self, X):
        proba = self.predict_proba(X)
        # argmax with ties to class 0
        return (proba[:, 1] > proba[:, 0]).astype(int)


def _best_split(X, y, min_leaf):
    """Exhaustive Gini split search with exact rational tie-breaking.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values.  Candidates are scored by Q = A/n_L + B/n_R (A, B the sums of
    squared class counts in each child); maximizing Q maximizes the impurity
    decrease.  The decrease is never negative, so any separable threshold is
    an acceptable split (zero-gain splits are what let XOR-style patterns
    resolve at depth 2).  A float pass shortlists near-maximal candidates,
    then exact Fractions pick the winner: lowest feature index first,
    smallest threshold second.  Returns (feature, threshold) or None when no
    candidate separates the node.
    """
    ns, d = X.shape
    n1 = int(y.sum())
    order = np.argsort(X, axis=0, kind="stable")
    x_sorted = np.take_along_axis(X, order, axis=0)
    y_sorted = y[order]
    cum1 = np.cumsum(y_sorted, axis=0)[:-1]        # class-1 count left of each cut
    n_left = np.arange(1, ns, dtype=np.float64)
    n_right = ns - n_left
    sizes_ok = (n_left >= min_leaf) & (n_right >= min_leaf)
    best = None  # (Q: Fraction, feature, threshold)
    for f in range(d):
        col = x_sorted[:, f]
        thresholds = (col[:-1] + col[1:]) / 2.0
        valid = sizes_ok & (col[:-1] < col[1:]) & (thresholds < col[1:])
        if not valid.any():
            continue
        left1 = cum1[:, f].astype(np.float64)
        left0 = n_left - left1
        right1 = n1 - left1
        right0 = n_right - right1
        a = left1 * left1 + left0 * left0
        b = right1 * right1 + right0 * right0
        score = a / n_left + b / n_right
        score[~valid] = -np.inf
        top = score.max()
        near = np.flatnonzero(score >= top - _NEAR_MAX_ATOL)
        feature_best = None
        for r in near:
            q = Fraction(
                int(a[r]) * int(n_right[r]) + int(b[r]) * int(n_left[r]),
                int(n_left[r]) * int(n_right[r]),
            )
            if feature_best is None or q > feature_best[0]:
                feature_best = (q, float(thresholds[r]))
        if best is None or feature_best[0] > best[0]:
            best = (feature_best[0], f, feature_best[1])
    if best is None:
        return None
    return best[1], best[2]


def _grow(X, y, depth, max_depth, min_leaf):
    ns = y.shape[0]
    n1 = int(y.sum())
    node = _TreeNode(
        proba=np.array([(ns - n1) / ns, n1 / ns]), n_samples=ns
    )
    if n1 in (0, ns):
        return node
    if max_depth is not None and depth >= max_depth:
        return node
    if ns < 2 * min_leaf:
        return node
    split = _best_split(X, y, min_leaf)
    if split is None:
        return node
    feature, thr = split
    mask = X[:, feature] <= thr
    node.feature = feature
    node.threshold = thr
    node.left = _grow(X[mask], y[mask], depth + 1, max_depth, min_leaf)
    node.right = _grow(X[~mask], y[~mask], depth + 1, max_depth, min_leaf)
    return node


def fit_tree(X, y, max_depth=None, min_leaf=1):
    """Grow a CART tree on Gini impurity.

    Growth stops when a node is pure, reaches ``max_depth``, is smaller than
    2 * min_leaf, or no threshold separates it.
    """
    X = as_matrix(X, "X")
    y = np.asarray(y, dtype=int)
    if X.shape[0] == 0:
        raise EmptyData("cannot fit a tree on zero samples")
    if y.shape[0] != X.shape[0]:
        raise ValueError("X and y must align")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if min_leaf < 1:
        raise ValueError(f"min_leaf must be >= 1, got {min_leaf}")
    root = _grow(X, y, 0, max_depth, min_leaf)
    return DecisionTree(root=root, max_depth=max_depth, min_leaf=min_leaf)


class BaggedTreeClassifier(BaseEstimator, ClassifierMixin):
    """Bootstrap-aggregated CART trees with majority voting.

    Each tree trains on a bootstrap resample (dataset size, with
    replacement) drawn from one seeded generator, so an identical
    ``random_state`` reproduces the ensemble exactly.  Vote ties predict
    class 0.

    Parameters
    ----------
    n_trees : int
    max_depth : int or None
    min_leaf : int
    random_state : int or sequence of int
    """

    def __init__(self, n_trees=400, max_depth=None, min_leaf=1, random_state=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.random_state = random_state

    def fit(self, X, y):
        X = as_matrix(X, "X")
        y = np.asarray(y, dtype=int)
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if X.shape[0] == 0:
            raise EmptyData("cannot fit an ensemble on zero samples")
        rng = np.random.default_rng(self.random_state)
        n = X.shape[0]
        # all bootstrap index sets are drawn up front, so training order
        # cannot change the result
        indices = rng.integers(0, n, size=(self.n_trees, n))
        self.trees_ = [
            fit_tree(X[idx], y[idx], max_depth=self.max_depth, min_leaf=self.min_leaf)
            for idx in indices
        ]
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "trees_"):
            raise NotFittedError("fit the classifier before predicting")

    def predict(self, X):
        self._check_fitted()
        X = as_matrix(X, "X")
        votes1 = np.zeros(X.shape[0], dtype=np.int64)
        for tree in self.trees_:
            votes1 += tree.predict(X)
        return (2 * votes1 > len(self.trees_)).astype(int)

    def predict_proba(self, X):
        self._check_fitted()
        X = as_matrix(X, "X")
        votes1 = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self.trees_:
            votes1 += tree.predict(X)
        frac = votes1 / len(self.trees_)
        return np.column_stack([1.0 - frac, frac])


def fit_ensemble(X, y, n_trees=400, seed=0, max_depth=None, min_leaf=1):
    """Fit a seeded bagged ensemble (functional wrapper)."""
    clf = BaggedTreeClassifier(
        n_trees=n_trees, max_depth=max_depth, min_leaf=min_leaf, random_state=seed
    )
    return clf.fit(X, y)


@dataclass
class MetricsReport:
    """Precision/recall/F1/accuracy with confusion counts and fold detail.

    Positive class is 1; degenerate denominators yield 0 with a flag.
    """

    precision: float
    recall: float
    f1: float
    accuracy: float
    tp: int
    fp: int
    fn: int
    tn: int
    per_fold: list = field(default_factory=list)
    folds: int = None
    n_trees: int = None
    seed: int = None
    pooled: bool = True
    precision_degenerate: bool = False
    recall_degenerate: bool = False

    def to_dict(self):
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "accuracy": self.accuracy,
            "confusion": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
            "per_fold": self.per_fold,
            "folds": self.folds,
            "n_trees": self.n_trees,
            "seed": self.seed,
            "pooled": self.pooled,
            "precision_degenerate": self.precision_degenerate,
            "recall_degenerate": self.recall_degenerate,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def metrics(tp, fp, fn, tn):
    """Metric suite from confusion counts (positive class = 1)."""
    tp, fp, fn, tn = (int(v) for v in (tp, fp, fn, tn))
    total = tp + fp + fn + tn
    if total <= 0:
        raise ValueError("confusion counts sum to zero")
    precision_degenerate = (tp + fp) == 0
    recall_degenerate = (tp + fn) == 0
    precision = 0.0 if precision_degenerate else tp / (tp + fp)
    recall = 0.0 if recall_degenerate else tp / (tp + fn)
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if (precision + recall) > 0
        else 0.0
    )
    accuracy = (tp + tn) / total
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        accuracy=accuracy,
        tp=int(tp),
        fp=int(fp),
        fn=int(fn),
        tn=int(tn),
        precision_degenerate=precision_degenerate,
        recall_degenerate=recall_degenerate,
    )


def stratified_folds(labels, folds, rng):
    """Per-class shuffled round-robin fold assignment."""
    labels = np.asarray(labels, dtype=int)
    fold_of = np.empty(labels.shape[0], dtype=int)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < folds:
            raise TooFewSamples(
                f"class {cls} has {idx.size} samples; need >= {folds} for "
                f"{folds}-fold stratified CV"
            )
        idx = idx.copy()
        rng.shuffle(idx)
        fold_of[idx] = np.arange(idx.size) % folds
    return fold_of


def cross_validate(X, y, folds=10, n_trees=400, seed=0, max_depth=None,
                   min_leaf=1, per_fold_mean=False):
    """Stratified k-fold evaluation of the bagged ensemble.

    Fold assignment and every ensemble derive deterministically from
    ``seed``.  Headline metrics pool the confusion counts across folds;
    ``per_fold_mean=True`` reports per-fold means instead.  The per-fold
    breakdown is always included.
    """
    X = as_matrix(X, "X")
    y = np.asarray(y, dtype=int)
    if y.shape[0] != X.shape[0]:
        raise ValueError("X and y must align")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    rng = np.random.default_rng(seed)
    fold_of = stratified_folds(y, folds, rng)
    pooled = np.zeros(4, dtype=np.int64)  # tp, fp, fn, tn
    per_fold = []
    for f in range(folds):
        test = fold_of == f
        clf = fit_ensemble(
            X[~test], y[~test], n_trees=n_trees, seed=[int(seed), f],
            max_depth=max_depth, min_leaf=min_leaf,
        )
        pred = clf.predict(X[test])
        truth = y[test]
        tp = int(np.sum((truth == 1) & (pred == 1)))
        fp = int(np.sum((truth == 0) & (pred == 1)))
        fn = int(np.sum((truth == 1) & (pred == 0)))
        tn = int(np.sum((truth == 0) & (pred == 0)))
        pooled += (tp, fp, fn, tn)
        fold_report = metrics(tp, fp, fn, tn)
        per_fold.append(
            {
                "fold": f,
                "tp": tp,
                "fp": fp,
                "fn": fn,
                "tn": tn,
                "precision": fold_report.precision,
                "recall": fold_report.recall,
                "f1": fold_report.f1,
                "accuracy": fold_report.accuracy,
            }
        )
    report = metrics(*pooled)
    if per_fold_mean:
        for name in ("precision", "recall", "f1", "accuracy"):
            setattr(report, name, float(np.mean([pf[name] for pf in per_fold])))
        report.pooled = False
    report.per_fold = per_fold
    report.folds = folds
    report.n_trees = n_trees
    report.seed = int(seed)
    return report
