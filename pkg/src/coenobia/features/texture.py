"""Texture descriptors: uniform LBP histogram and Haralick GLCM statistics."""

from __future__ import annotations

import numpy as np

from ..errors import NoValidPairs, PatchTooSmall

# 8 neighbors at radius 1, starting east and turning counterclockwise on screen: (dy, dx)
LBP_NEIGHBORS = ((0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1))
N_LBP = 59

GLCM_LEVELS = 8
# distance-1 offsets for 0, 45, 90 and 135 degrees: (dy, dx)
GLCM_OFFSETS = ((0, 1), (-1, 1), (-1, 0), (-1, -1))
HARALICK_NAMES = (
    "asm", "contrast", "correlation", "variance", "idm", "sum_average", "sum_variance",
    "sum_entropy", "entropy", "diff_variance", "diff_entropy", "imc1", "imc2", "max_corr",
)


def transitions(code: int) -> int:
    """Number of 0/1 changes around the circular 8-bit pattern."""
    rot = ((code >> 1) | ((code & 1) << 7)) & 0xFF
    return bin(code ^ rot).count("1")


def _u2_table() -> np.ndarray:
    table = np.full(256, 58, dtype=np.intp)
    uniform = [c for c in range(256) if transitions(c) <= 2]
    table[uniform] = np.arange(len(uniform))
    return table


U2_TABLE = _u2_table()


def lbp_codes(image) -> np.ndarray:
    """8-bit LBP code for every interior pixel (bit k set when neighbor k >= center)."""
    img = np.asarray(image, dtype=np.int32)
    h, w = img.shape
    if h < 3 or w < 3:
        raise PatchTooSmall("LBP needs at least a 3x3 patch")
    center = img[1:-1, 1:-1]
    codes = np.zeros(center.shape, dtype=np.intp)
    for k, (dy, dx) in enumerate(LBP_NEIGHBORS):
        nb = img[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
        codes |= (nb >= center).astype(np.intp) << k
    return codes


def lbp_histogram(image, mask=None) -> np.ndarray:
    """L1-normalized 59-bin uniform LBP histogram over interior mask pixels.

    Bins 0..57 are the uniform codes in increasing code order, bin 58
    collects everything else.  A mask without interior pixels gives zeros.

    Raises:
        PatchTooSmall: the patch is smaller than 3x3.
    """
    codes = lbp_codes(image)
    if mask is not None:
        codes = codes[np.asarray(mask, dtype=bool)[1:-1, 1:-1]]
    hist = np.bincount(U2_TABLE[codes.ravel()], minlength=N_LBP).astype(float)
    total = hist.sum()
    return hist / total if total > 0 else hist


def quantize(image, levels: int = GLCM_LEVELS) -> np.ndarray:
    return (np.asarray(image, dtype=np.int64) * levels) // 256


def glcm(q: np.ndarray, mask, offset, levels: int = GLCM_LEVELS):
    """Symmetric normalized co-occurrence matrix for one offset.

    Only pairs with both pixels inside the mask count.  Returns ``None`` when
    there is no such pair.
    """
    dy, dx = offset
    h, w = q.shape
    m = np.ones(q.shape, bool) if mask is None else np.asarray(mask, dtype=bool)
    ys0, ys1 = max(0, -dy), h - max(0, dy)
    xs0, xs1 = max(0, -dx), w - max(0, dx)
    a = q[ys0:ys1, xs0:xs1]
    b = q[ys0 + dy:ys1 + dy, xs0 + dx:xs1 + dx]
    ok = m[ys0:ys1, xs0:xs1] & m[ys0 + dy:ys1 + dy, xs0 + dx:xs1 + dx]
    if not ok.any():
        return None
    p = np.zeros((levels, levels))
    np.add.at(p, (a[ok], b[ok]), 1.0)
    p = p + p.T
    return p / p.sum()


def _entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def haralick_stats(p: np.ndarray) -> np.ndarray:
    """Haralick's 14 statistics of a symmetric normalized GLCM.

    Gray levels are numbered from 1; logarithms are natural.  Undefined cases
    get fixed values: correlation 1 for zero variance, IMC1 0 when both
    marginal entropies vanish, max correlation 0 with a single occupied level.
    """
    g = p.shape[0]
    idx = np.arange(1, g + 1, dtype=float)
    i, j = np.meshgrid(idx, idx, indexing="ij")
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    mu_x, mu_y = float(idx @ px), float(idx @ py)
    sd_x = np.sqrt(max(float(((idx - mu_x) ** 2) @ px), 0.0))
    sd_y = np.sqrt(max(float(((idx - mu_y) ** 2) @ py), 0.0))

    k_sum = np.arange(2, 2 * g + 1)
    p_sum = np.bincount((i + j).astype(int).ravel() - 2, weights=p.ravel(), minlength=2 * g - 1)
    p_diff = np.bincount(np.abs(i - j).astype(int).ravel(), weights=p.ravel(), minlength=g)
    k_diff = np.arange(g)

    f = np.empty(14)
    f[0] = float((p * p).sum())
    f[1] = float((k_diff ** 2) @ p_diff)
    if sd_x * sd_y > 1e-12:
        f[2] = (float((i * j * p).sum()) - mu_x * mu_y) / (sd_x * sd_y)
    else:
        f[2] = 1.0
    f[3] = float((((i - mu_x) ** 2) * p).sum())
    f[4] = float((p / (1.0 + (i - j) ** 2)).sum())
    f[5] = float(k_sum @ p_sum)
    f[6] = float(((k_sum - f[5]) ** 2) @ p_sum)
    f[7] = _entropy(p_sum)
    hxy = _entropy(p)
    f[8] = hxy
    mu_d = float(k_diff @ p_diff)
    f[9] = float(((k_diff - mu_d) ** 2) @ p_diff)
    f[10] = _entropy(p_diff)

    hx, hy = _entropy(px), _entropy(py)
    outer = np.outer(px, py)
    nz = outer > 0
    hxy1 = float(-(p[nz] * np.log(outer[nz])).sum())
    hxy2 = _entropy(outer)
    denom = max(hx, hy)
    f[11] = (hxy - hxy1) / denom if denom > 0 else 0.0
    f[12] = np.sqrt(max(1.0 - np.exp(-2.0 * (hxy2 - hxy)), 0.0))

    occ = (px > 0) & (py > 0)
    if occ.sum() < 2:
        f[13] = 0.0
    else:
        ps = p[np.ix_(occ, occ)]
        dx = px[occ]
        dy = py[occ]
        # Q = Dx^-1 P Dy^-1 P^T, symmetrized by Dx^{1/2} ... Dx^{-1/2}
        a = ps / np.sqrt(dx)[:, None] / np.sqrt(dy)[None, :]
        ev = np.sort(np.linalg.eigvalsh(a @ a.T))
        f[13] = np.sqrt(max(float(ev[-2]), 0.0))
    return f


def haralick_features(image, mask=None, levels: int = GLCM_LEVELS) -> np.ndarray:
    """14 means followed by 14 ranges (max - min) over the four directions.

    Directions whose mask admits no pixel pair are left out.

    Raises:
        PatchTooSmall: the patch is smaller than 2x2.
        NoValidPairs: no direction has a pair of adjacent mask pixels.
    """
    img = np.asarray(image)
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise PatchTooSmall("Haralick features need at least a 2x2 patch")
    q = quantize(img, levels)
    stats = [haralick_stats(p) for off in GLCM_OFFSETS
             if (p := glcm(q, mask, off, levels)) is not None]
    if not stats:
        raise NoValidPairs("mask leaves no adjacent pixel pairs")
    s = np.array(stats)
    return np.concatenate([s.mean(axis=0), s.max(axis=0) - s.min(axis=0)])
