"""Contrast equalization, posterization and global thresholding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_gray, round_half_up
from .errors import AllSameIntensity, ConfigOutOfRange, ImageSmallerThanTile


@dataclass(frozen=True)
class ClaheConfig:
    tiles_x: int = 8
    tiles_y: int = 8
    clip_limit: float = 2.0

    def __post_init__(self):
        if self.tiles_x < 1 or self.tiles_y < 1:
            raise ConfigOutOfRange("CLAHE tile counts must be >= 1")
        if not self.clip_limit > 0:
            raise ConfigOutOfRange("CLAHE clip limit must be > 0")


def clip_histogram(hist: np.ndarray, clip_limit: float) -> np.ndarray:
    """Clip a 256-bin histogram and spread the excess evenly over all bins.

    The clip height is ``clip_limit`` times the uniform bin height
    ``hist.sum() / 256``.
    """
    hist = np.asarray(hist, dtype=float)
    ceiling = clip_limit * hist.sum() / 256.0
    excess = np.maximum(hist - ceiling, 0.0).sum()
    return np.minimum(hist, ceiling) + excess / 256.0


def _tile_lut(tile: np.ndarray, clip_limit: float) -> np.ndarray:
    hist = np.bincount(tile.ravel(), minlength=256).astype(float)
    hist = clip_histogram(hist, clip_limit)
    cdf = np.cumsum(hist)
    n = cdf[-1]
    cdf_min = cdf[np.nonzero(hist)[0][0]]
    if n - cdf_min <= 1e-12:
        return np.arange(256, dtype=float)
    return np.clip(255.0 * (cdf - cdf_min) / (n - cdf_min), 0.0, 255.0)


def _edges(n: int, tiles: int) -> np.ndarray:
    return (np.arange(tiles + 1) * n) // tiles


def clahe(img: np.ndarray, cfg: ClaheConfig = ClaheConfig()) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization.

    Each tile gets a clipped-histogram equalization table; every pixel is
    mapped through the four nearest tile tables and blended bilinearly by its
    distance to the tile centers (clamped at the image border).
    """
    img = as_gray(img)
    h, w = img.shape
    if h < cfg.tiles_y or w < cfg.tiles_x:
        raise ImageSmallerThanTile(
            f"{w}x{h} image cannot be split into {cfg.tiles_x}x{cfg.tiles_y} tiles")
    ye = _edges(h, cfg.tiles_y)
    xe = _edges(w, cfg.tiles_x)
    luts = np.empty((cfg.tiles_y, cfg.tiles_x, 256))
    for ty in range(cfg.tiles_y):
        for tx in range(cfg.tiles_x):
            luts[ty, tx] = _tile_lut(img[ye[ty]:ye[ty + 1], xe[tx]:xe[tx + 1]], cfg.clip_limit)

    yc = (ye[:-1] + ye[1:] - 1) / 2.0
    xc = (xe[:-1] + xe[1:] - 1) / 2.0

    def axis_weights(n, centers):
        pos = np.arange(n, dtype=float)
        i1 = np.searchsorted(centers, pos, side="right")
        i0 = np.clip(i1 - 1, 0, len(centers) - 1)
        i1 = np.clip(i1, 0, len(centers) - 1)
        span = centers[i1] - centers[i0]
        frac = np.where(span > 0, (pos - centers[i0]) / np.where(span > 0, span, 1), 0.0)
        return i0, i1, np.clip(frac, 0.0, 1.0)

    y0, y1, fy = axis_weights(h, yc)
    x0, x1, fx = axis_weights(w, xc)
    v = img.astype(np.intp)
    Y0, X0 = np.meshgrid(y0, x0, indexing="ij")
    Y1, X1 = np.meshgrid(y1, x1, indexing="ij")
    FY = fy[:, None]
    FX = fx[None, :]
    out = ((1 - FY) * ((1 - FX) * luts[Y0, X0, v] + FX * luts[Y0, X1, v])
           + FY * ((1 - FX) * luts[Y1, X0, v] + FX * luts[Y1, X1, v]))
    return np.clip(round_half_up(out), 0, 255).astype(np.uint8)


def posterize(img: np.ndarray, n_levels: int = 3) -> np.ndarray:
    """Quantize to ``n_levels + 1`` evenly spaced gray levels.

    ``round(round(v * n / 255) * 255 / n)`` with half-up rounding, evaluated
    in integer arithmetic so ties are exact.
    """
    if not 1 <= int(n_levels) <= 255:
        raise ConfigOutOfRange("quantization steps must be in [1, 255]")
    n = int(n_levels)
    v = as_gray(img).astype(np.int64)
    k = (2 * v * n + 255) // 510
    return ((2 * k * 255 + n) // (2 * n)).astype(np.uint8)


def between_class_variance(hist) -> list:
    """Exact between-class variance terms for t = 0..254.

    Returns ``(num, den)`` integer pairs with
    ``sigma_B^2(t) * N^2 = num / den``; empty classes give ``(0, 1)``.
    """
    hist = [int(c) for c in hist]
    n = sum(hist)
    total = sum(i * c for i, c in enumerate(hist))
    out = []
    n0 = s0 = 0
    for t in range(255):
        n0 += hist[t]
        s0 += t * hist[t]
        n1 = n - n0
        s1 = total - s0
        if n0 == 0 or n1 == 0:
            out.append((0, 1))
        else:
            out.append(((n1 * s0 - n0 * s1) ** 2, n0 * n1))
    return out


def otsu_threshold(img: np.ndarray) -> int:
    """Otsu threshold over the 256-bin histogram; ties go to the smallest t.

    Pixels ``<= t`` form the lower class.  Comparisons are done on exact
    rationals, so equal variances compare equal.

    Raises:
        AllSameIntensity: fewer than two distinct gray levels.
    """
    img = as_gray(img)
    hist = np.bincount(img.ravel(), minlength=256)
    if np.count_nonzero(hist) < 2:
        raise AllSameIntensity("Otsu threshold needs at least two gray levels")
    best_t, best = 0, (0, 1)
    for t, (num, den) in enumerate(between_class_variance(hist)):
        if num * best[1] > best[0] * den:
            best_t, best = t, (num, den)
    return best_t


def binarize(img: np.ndarray, t: int) -> np.ndarray:
    """Foreground mask: algae are darker than the background, so ``<= t``."""
    return as_gray(img) <= t
