"""Sequential forward selection over the descriptor vector and choice of its length."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .classify.model import ClassifierSpec, fit_classifier
from .classify.smo import ovo_cv_predict
from .classify.svm import SvmConfig
from .core import LabeledDataset
from .errors import DegenerateData, SingleClassInput
from .evaluate import stratified_folds

SFS_FOLDS = 5
DEFAULT_CRITERION = ClassifierSpec("svm", SvmConfig(C=1.0, kernel="linear"))


@dataclass
class SfsRanking:
    order: np.ndarray         # feature indices in the order they were added
    score_curve: np.ndarray   # mean criterion accuracy after each addition
    std_curve: np.ndarray
    step_scores: list = field(default_factory=list, repr=False)  # per step: score per feature (NaN = taken)

    def as_dict(self) -> dict:
        l, acc, std = choose_l(self)
        return {
            "order": [int(i) for i in self.order],
            "score_curve": [float(v) for v in self.score_curve],
            "std_curve": [float(v) for v in self.std_curve],
            "l": l, "accuracy": acc, "std": std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SfsRanking":
        return cls(np.asarray(d["order"], dtype=np.int64), np.asarray(d["score_curve"], float),
                   np.asarray(d["std_curve"], float))


def _fold_scores(y_idx, pred, folds, k):
    acc = np.array([np.mean(pred[folds == f] == y_idx[folds == f]) for f in range(k)])
    return float(acc.mean()), float(acc.std(ddof=1))


class _KernelCV:
    """Criterion evaluation on a precomputed kernel, grown one feature at a time."""

    def __init__(self, X, y_idx, folds, k, cfg: SvmConfig):
        self.X, self.y, self.folds, self.k, self.cfg = X, y_idx, folds, k, cfg
        n = len(X)
        self.base = np.zeros((n, n))  # Gram (linear) or squared distances (rbf) of chosen set
        self.n_classes = int(y_idx.max()) + 1

    def _kernel(self, j):
        x = self.X[:, j]
        if self.cfg.kernel == "linear":
            return self.base + np.outer(x, x)
        d = x[:, None] - x[None, :]
        return np.exp(-self.cfg.gamma * (self.base + d * d))

    def score(self, j):
        K = np.ascontiguousarray(self._kernel(j))
        pred = ovo_cv_predict(K, self.y, self.folds, self.k, self.n_classes,
                              float(self.cfg.C), float(self.cfg.tol), int(self.cfg.max_iter))
        return _fold_scores(self.y, pred, self.folds, self.k)

    def add(self, j):
        x = self.X[:, j]
        if self.cfg.kernel == "linear":
            self.base += np.outer(x, x)
        else:
            d = x[:, None] - x[None, :]
            self.base += d * d


class _GenericCV:
    """Criterion evaluation by retraining the classifier per fold."""

    def __init__(self, X, y_idx, folds, k, spec: ClassifierSpec):
        self.X, self.y, self.folds, self.k, self.spec = X, y_idx, folds, k, spec
        self.chosen = []

    def score(self, j):
        cols = self.chosen + [j]
        pred = np.empty(len(self.y), dtype=np.int64)
        for f in range(self.k):
            tr = self.folds != f
            clf = fit_classifier(self.X[np.ix_(tr, cols)], self.y[tr], self.spec)
            pred[~tr] = clf.predict(self.X[np.ix_(~tr, cols)])
        return _fold_scores(self.y, pred, self.folds, self.k)

    def add(self, j):
        self.chosen.append(j)


def sfs_rank(data: LabeledDataset, criterion: ClassifierSpec = DEFAULT_CRITERION,
             seed: int = 0, k: int = SFS_FOLDS, max_features=None) -> SfsRanking:
    """Greedy forward ranking of all features.

    Starting from the empty set, each step scores every unselected feature
    by the criterion's mean ``k``-fold accuracy on the grown subset and keeps
    the best (ties to the lowest feature index).  ``data`` should already be
    standardized; folds are stratified and fixed for the whole run.

    Raises:
        SingleClassInput: fewer than two classes.
        DegenerateData: a class has fewer than ``k`` samples.
    """
    X = np.asarray(data.X, dtype=float)
    labels, y_idx = np.unique(data.y, return_inverse=True)
    if len(labels) < 2:
        raise SingleClassInput("feature selection needs at least two classes")
    counts = np.bincount(y_idx)
    if counts.min() < k:
        raise DegenerateData(f"a class has {counts.min()} samples, fewer than {k} folds")
    folds = stratified_folds(data.y, k, seed, stream="sfs-folds")
    y_idx = y_idx.astype(np.int64)
    if criterion.kind == "svm":
        cv = _KernelCV(X, y_idx, folds, k, criterion.svm)
    else:
        spec = dataclasses.replace(criterion, ann=dataclasses.replace(criterion.ann, seed=seed))
        cv = _GenericCV(X, y_idx, folds, k, spec)

    d = X.shape[1]
    steps = d if max_features is None else min(d, int(max_features))
    remaining = np.ones(d, dtype=bool)
    order, means, stds, step_scores = [], [], [], []
    for _ in range(steps):
        sc = np.full(d, np.nan)
        sd = np.full(d, np.nan)
        for j in np.nonzero(remaining)[0]:
            sc[j], sd[j] = cv.score(int(j))
        best = int(np.nanargmax(sc))  # first maximum = lowest index
        order.append(best)
        means.append(sc[best])
        stds.append(sd[best])
        step_scores.append(sc)
        remaining[best] = False
        cv.add(best)
    return SfsRanking(np.array(order, dtype=np.int64), np.array(means), np.array(stds), step_scores)


def choose_l(ranking: SfsRanking):
    """``(l, accuracy, std)`` at the best prefix length; ties to the shortest prefix."""
    curve = np.asarray(ranking.score_curve, dtype=float)
    i = int(np.argmax(curve))
    std = float(ranking.std_curve[i]) if len(ranking.std_curve) else 0.0
    return i + 1, float(curve[i]), std
