"""Histogram of oriented gradients on a fixed 48x48 grid."""

from __future__ import annotations

import numpy as np

from ..core import resize_bilinear

HOG_SIZE = 48
HOG_CELLS = 3
HOG_BINS = 9
HOG_EPS = 1e-6


def cell_histograms(img: np.ndarray, cells: int = HOG_CELLS, bins: int = HOG_BINS) -> np.ndarray:
    """Unnormalized ``(cells, cells, bins)`` orientation histograms.

    Gradients use the centered ``[-1, 0, 1]`` kernel with replicated
    borders.  Orientations are unsigned; bin ``b`` is centered at
    ``b * 180 / bins`` degrees and each vote is split linearly between the two
    nearest centers (wrapping at 180).
    """
    f = np.pad(np.asarray(img, dtype=float), 1, mode="edge")
    gx = f[1:-1, 2:] - f[1:-1, :-2]
    gy = f[2:, 1:-1] - f[:-2, 1:-1]
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0
    width = 180.0 / bins
    pos = ang / width
    lo = np.floor(pos).astype(int) % bins
    frac = pos - np.floor(pos)
    hi = (lo + 1) % bins
    h, w = f.shape[0] - 2, f.shape[1] - 2
    cy = np.minimum(np.arange(h) * cells // h, cells - 1)
    cx = np.minimum(np.arange(w) * cells // w, cells - 1)
    cell = (cy[:, None] * cells + cx[None, :]).ravel()
    out = np.zeros((cells * cells, bins))
    np.add.at(out, (cell, lo.ravel()), (mag * (1 - frac)).ravel())
    np.add.at(out, (cell, hi.ravel()), (mag * frac).ravel())
    return out.reshape(cells, cells, bins)


def hog_descriptor(image, mask=None) -> np.ndarray:
    """81-dim HOG: 48x48 resample, 3x3 cells of 16x16, 9 bins, per-cell L2 norm.

    Masked-out pixels are zeroed before resampling.
    """
    img = np.asarray(image, dtype=float)
    if mask is not None:
        img = img * np.asarray(mask, dtype=bool)
    if img.shape != (HOG_SIZE, HOG_SIZE):
        img = resize_bilinear(img, (HOG_SIZE, HOG_SIZE))
    hist = cell_histograms(img)
    norm = np.sqrt((hist ** 2).sum(axis=2, keepdims=True) + HOG_EPS ** 2)
    return (hist / norm).ravel()
