"""Shared drawing helpers for the tests."""

import numpy as np

from coenobia.classify.model import fit_classifier
from coenobia.core import LabeledDataset
from coenobia.evaluate import stratified_folds
from coenobia.features import Standardizer
from coenobia.select import DEFAULT_CRITERION


def disk(shape, center, radius):
    yy, xx = np.mgrid[:shape[0], :shape[1]]
    return (yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= radius ** 2


def ring(shape, center, r_out, r_in):
    return disk(shape, center, r_out) & ~disk(shape, center, r_in)


def random_shape(rng, size=80):
    """Union of up to three ellipses with smooth shading, at least 600 px."""
    yy, xx = np.mgrid[:size, :size]
    while True:
        mask = np.zeros((size, size), bool)
        for _ in range(int(rng.integers(1, 4))):
            cy, cx = rng.uniform(30, 50, 2)
            ry, rx = rng.uniform(8, 16, 2)
            t = rng.uniform(0, np.pi)
            u = (xx - cx) * np.cos(t) + (yy - cy) * np.sin(t)
            v = -(xx - cx) * np.sin(t) + (yy - cy) * np.cos(t)
            mask |= (u / rx) ** 2 + (v / ry) ** 2 <= 1
        if mask.sum() >= 600:
            break
    shade = 140 + 60 * np.sin(xx / 9.0 + rng.uniform(0, 6)) * np.cos(yy / 11.0)
    return np.where(mask, np.clip(shade, 0, 255), 0).astype(np.uint8), mask


def four_clusters(rng, n=40, spread=0.3):
    centers = np.array([[0, 0], [4, 0], [0, 4], [4, 4]], dtype=float)
    X = np.concatenate([c + spread * rng.standard_normal((n, 2)) for c in centers])
    y = np.repeat([1, 2, 4, 8], n)
    return X, y


def planted(rng, n_per_class=20, noise_dims=8):
    """Two informative dims (together they separate the four classes) plus noise."""
    y = np.repeat([1, 2, 4, 8], n_per_class)
    bits = {1: (0, 0), 2: (1, 0), 4: (0, 1), 8: (1, 1)}
    info = np.array([bits[c] for c in y], dtype=float) * 4 + 0.3 * rng.standard_normal((len(y), 2))
    X = rng.standard_normal((len(y), 2 + noise_dims))
    cols = rng.permutation(2 + noise_dims)
    X[:, cols[:2]] = info
    X = Standardizer.fit(X).apply(X)
    return LabeledDataset([f"s{i}" for i in range(len(y))], X, y), sorted(cols[:2].tolist())


def criterion_score(data, cols, seed, k=5):
    """Mean k-fold accuracy of the linear criterion, retrained per fold."""
    folds = stratified_folds(data.y, k, seed, stream="sfs-folds")
    acc = []
    for f in range(k):
        tr = folds != f
        clf = fit_classifier(data.X[np.ix_(tr, cols)], data.y[tr], DEFAULT_CRITERION)
        acc.append(np.mean(clf.predict(data.X[np.ix_(~tr, cols)]) == data.y[~tr]))
    return float(np.mean(acc))
