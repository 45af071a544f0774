"""Segmentation scoring (Hoover region metrics, pixel PRF) and k-fold classification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import CLASSES, LabeledDataset, substream
from .errors import ClassTooSmall, DimensionMismatch, LengthMismatch, SingleClassInput

DEFAULT_TOLERANCES = tuple(np.round(np.arange(51, 101) / 100.0, 2).tolist())
HOOVER_CATEGORIES = ("correct", "over_segmented", "under_segmented", "missed", "noise")


# ---------------------------------------------------------------------------
# pixels

class PRF(NamedTuple):
    precision: float
    recall: float
    f_measure: float
    undefined: bool = False  # some ratio had an empty denominator and was set to 0


def pixel_prf(gt, ms) -> PRF:
    gt = np.asarray(gt, dtype=bool)
    ms = np.asarray(ms, dtype=bool)
    if gt.shape != ms.shape:
        raise DimensionMismatch(f"mask shapes differ: {gt.shape} vs {ms.shape}")
    tp = int((gt & ms).sum())
    fp = int((~gt & ms).sum())
    fn = int((gt & ~ms).sum())
    undefined = False
    if tp + fp:
        p = tp / (tp + fp)
    else:
        p, undefined = 0.0, True
    if tp + fn:
        r = tp / (tp + fn)
    else:
        r, undefined = 0.0, True
    if p + r > 0:
        f = 2 * p * r / (p + r)
    else:
        f, undefined = 0.0, True
    return PRF(p, r, f, undefined)


# ---------------------------------------------------------------------------
# regions

def overlap_table(gt, ms):
    """``(overlap[m, n], gt sizes, ms sizes)`` over the positive labels of each map."""
    gt = np.asarray(gt)
    ms = np.asarray(ms)
    if gt.shape != ms.shape:
        raise DimensionMismatch(f"label map shapes differ: {gt.shape} vs {ms.shape}")
    g_labels = np.unique(gt[gt > 0])
    m_labels = np.unique(ms[ms > 0])
    gi = np.searchsorted(g_labels, gt)
    mi = np.searchsorted(m_labels, ms)
    both = (gt > 0) & (ms > 0)
    table = np.zeros((len(g_labels), len(m_labels)), dtype=np.int64)
    np.add.at(table, (gi[both], mi[both]), 1)
    g_size = np.array([(gt == v).sum() for v in g_labels], dtype=np.int64)
    m_size = np.array([(ms == v).sum() for v in m_labels], dtype=np.int64)
    return table, g_size, m_size


def hoover_assign(table, g_size, m_size, T: float):
    """Per-region Hoover classes at tolerance ``T``.

    Returns ``(gt_class, ms_class)`` arrays of category names; GT regions get
    one of correct/over_segmented/under_segmented/missed and MS regions
    correct/over_segmented/under_segmented/noise.  A region claimed by an
    earlier category is not reconsidered (correct > over > under).
    """
    ng, nm = table.shape
    gt_cls = np.array(["missed"] * ng, dtype=object)
    ms_cls = np.array(["noise"] * nm, dtype=object)
    gt_free = np.ones(ng, bool)
    ms_free = np.ones(nm, bool)
    for m in range(ng):
        for n in range(nm):
            o = table[m, n]
            if gt_free[m] and ms_free[n] and o >= T * g_size[m] and o >= T * m_size[n]:
                gt_cls[m] = ms_cls[n] = "correct"
                gt_free[m] = ms_free[n] = False
    for m in range(ng):
        if not gt_free[m]:
            continue
        parts = [n for n in range(nm) if ms_free[n] and table[m, n] > 0
                 and table[m, n] >= T * m_size[n]]
        if len(parts) >= 2 and table[m, parts].sum() >= T * g_size[m]:
            gt_cls[m] = "over_segmented"
            gt_free[m] = False
            for n in parts:
                ms_cls[n] = "over_segmented"
                ms_free[n] = False
    for n in range(nm):
        if not ms_free[n]:
            continue
        parts = [m for m in range(ng) if gt_free[m] and table[m, n] > 0
                 and table[m, n] >= T * g_size[m]]
        if len(parts) >= 2 and table[parts, n].sum() >= T * m_size[n]:
            ms_cls[n] = "under_segmented"
            ms_free[n] = False
            for m in parts:
                gt_cls[m] = "under_segmented"
                gt_free[m] = False
    return gt_cls, ms_cls


@dataclass
class HooverCurves:
    """Region-count tallies per tolerance; fractions come from the properties.

    GT-side categories are divided by the GT region count, noise by the MS
    region count; an empty denominator gives 0.
    """

    tolerances: np.ndarray
    counts: dict            # category -> counts per tolerance
    n_gt: int
    n_ms: int

    def fraction(self, category: str) -> np.ndarray:
        denom = self.n_ms if category == "noise" else self.n_gt
        c = np.asarray(self.counts[category], dtype=float)
        return c / denom if denom else np.zeros_like(c)

    @property
    def correct(self):
        return self.fraction("correct")

    @property
    def over_segmented(self):
        return self.fraction("over_segmented")

    @property
    def under_segmented(self):
        return self.fraction("under_segmented")

    @property
    def missed(self):
        return self.fraction("missed")

    @property
    def noise(self):
        return self.fraction("noise")

    def at(self, T: float) -> dict:
        k = int(np.argmin(np.abs(self.tolerances - T)))
        return {c: float(self.fraction(c)[k]) for c in HOOVER_CATEGORIES}

    @classmethod
    def pool(cls, curves) -> "HooverCurves":
        """Pooled tallies of several images (region-weighted average)."""
        curves = list(curves)
        tol = curves[0].tolerances
        counts = {c: np.sum([cv.counts[c] for cv in curves], axis=0) for c in HOOVER_CATEGORIES}
        return cls(tol, counts, sum(c.n_gt for c in curves), sum(c.n_ms for c in curves))


def hoover_curves(gt, ms, tolerances=DEFAULT_TOLERANCES) -> HooverCurves:
    """Hoover's five-way region comparison of two label maps (0 = background).

    Raises:
        DimensionMismatch: the maps differ in shape.
    """
    table, g_size, m_size = overlap_table(gt, ms)
    tol = np.asarray(tolerances, dtype=float)
    counts = {c: np.zeros(len(tol), dtype=np.int64) for c in HOOVER_CATEGORIES}
    for k, T in enumerate(tol):
        gt_cls, ms_cls = hoover_assign(table, g_size, m_size, T)
        for c in ("correct", "over_segmented", "under_segmented", "missed"):
            counts[c][k] = int(np.sum(gt_cls == c))
        counts["noise"][k] = int(np.sum(ms_cls == "noise"))
    return HooverCurves(tol, counts, len(g_size), len(m_size))


def mean_curves(curves) -> dict:
    """Per-image average of the fractions (each image weighs the same)."""
    curves = list(curves)
    return {c: np.mean([cv.fraction(c) for cv in curves], axis=0) for c in HOOVER_CATEGORIES}


# ---------------------------------------------------------------------------
# classification

def confusion_matrix(truth, predicted, classes=CLASSES) -> np.ndarray:
    """Counts with rows = true class and columns = predicted class."""
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    if truth.shape != predicted.shape:
        raise LengthMismatch(f"{len(truth)} true labels vs {len(predicted)} predictions")
    pos = {c: k for k, c in enumerate(classes)}
    out = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth.tolist(), predicted.tolist()):
        out[pos[t], pos[p]] += 1
    return out


def row_percent(cm: np.ndarray) -> np.ndarray:
    rows = cm.sum(axis=1, keepdims=True)
    return np.where(rows > 0, 100.0 * cm / np.where(rows > 0, rows, 1), 0.0)


def stratified_folds(y, k: int, seed: int, stream: str = "folds") -> np.ndarray:
    """Fold id per sample: each class is shuffled and dealt round-robin.

    The dealing continues across classes, so fold sizes differ by at most one.
    ``stream`` names the random substream drawn from ``seed``.
    """
    y = np.asarray(y)
    rng = substream(seed, stream)
    folds = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in sorted(np.unique(y).tolist()):
        idx = rng.permutation(np.nonzero(y == c)[0])
        folds[idx] = (offset + np.arange(len(idx))) % k
        offset += len(idx)
    return folds


def check_cv_data(y, k: int) -> None:
    y = np.asarray(y)
    labels, counts = np.unique(y, return_counts=True)
    if len(labels) < 2:
        raise SingleClassInput("cross-validation needs at least two classes")
    small = [int(c) for c, n in zip(labels, counts) if n < k]
    if small:
        raise ClassTooSmall(f"classes {small} have fewer than {k} samples")


@dataclass
class CVReport:
    fold_accuracies: np.ndarray
    mean: float
    std: float
    confusion_mean: np.ndarray   # row percentages averaged over folds
    confusion_std: np.ndarray
    predictions: np.ndarray = field(repr=False, default=None)
    folds: np.ndarray = field(repr=False, default=None)

    def as_dict(self) -> dict:
        return {
            "fold_accuracies": [float(a) for a in self.fold_accuracies],
            "mean_accuracy": float(self.mean),
            "std_accuracy": float(self.std),
            "confusion_mean": np.round(self.confusion_mean, 6).tolist(),
            "confusion_std": np.round(self.confusion_std, 6).tolist(),
            "classes": list(CLASSES),
        }


def summarize_folds(y, predictions, folds, k: int) -> CVReport:
    """Fold accuracies (std with ddof=1) and per-fold row-normalized confusions."""
    y = np.asarray(y)
    acc = np.empty(k)
    cms = []
    for f in range(k):
        sel = folds == f
        acc[f] = float(np.mean(predictions[sel] == y[sel]))
        cms.append(row_percent(confusion_matrix(y[sel], predictions[sel])))
    cms = np.array(cms)
    ddof = 1 if k > 1 else 0
    return CVReport(acc, float(acc.mean()), float(acc.std(ddof=ddof)),
                    cms.mean(axis=0), cms.std(axis=0, ddof=ddof), predictions, folds)


def kfold_cv(data: LabeledDataset, k: int = 10, spec=None, seed: int = 0, selected=None) -> CVReport:
    """Stratified k-fold estimate; each fold fits its own standardizer.

    Raises:
        ClassTooSmall: a class has fewer than ``k`` samples.
        SingleClassInput: fewer than two classes.
    """
    from .classify.model import ClassifierSpec, train_model

    spec = ClassifierSpec() if spec is None else spec
    check_cv_data(data.y, k)
    folds = stratified_folds(data.y, k, seed)
    pred = np.zeros(len(data), dtype=np.int64)
    for f in range(k):
        tr = folds != f
        model = train_model(data.X[tr], data.y[tr], spec, selected)
        pred[~tr] = model.predict(data.X[~tr])
    return summarize_folds(data.y, pred, folds, k)
