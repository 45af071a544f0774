"""Moment descriptors: Hu invariants and Zernike magnitudes."""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np

from ..errors import EmptyMask

N_ZERNIKE = 40


def _weights(image, mask) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("descriptor needs a nonempty mask")
    f = np.asarray(image, dtype=float) * mask
    if f.sum() <= 0:
        # all-black object: fall back to its silhouette
        f = mask.astype(float)
    return f


def signed_log(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.log10(np.abs(x) + 1e-30)


def hu_raw(image, mask) -> np.ndarray:
    """Hu's seven invariants of the masked intensity distribution (no log)."""
    f = _weights(image, mask)
    ys, xs = np.mgrid[0:f.shape[0], 0:f.shape[1]].astype(float)
    m00 = f.sum()
    xc = (xs * f).sum() / m00
    yc = (ys * f).sum() / m00
    dx, dy = xs - xc, ys - yc

    def eta(p, q):
        mu = (dx ** p * dy ** q * f).sum()
        return mu / m00 ** (1 + (p + q) / 2.0)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03, n21, n12 = eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2)
    a, b = n30 + n12, n21 + n03
    phi = np.empty(7)
    phi[0] = n20 + n02
    phi[1] = (n20 - n02) ** 2 + 4 * n11 ** 2
    phi[2] = (n30 - 3 * n12) ** 2 + (3 * n21 - n03) ** 2
    phi[3] = a ** 2 + b ** 2
    phi[4] = ((n30 - 3 * n12) * a * (a ** 2 - 3 * b ** 2)
              + (3 * n21 - n03) * b * (3 * a ** 2 - b ** 2))
    phi[5] = (n20 - n02) * (a ** 2 - b ** 2) + 4 * n11 * a * b
    phi[6] = ((3 * n21 - n03) * a * (a ** 2 - 3 * b ** 2)
              - (n30 - 3 * n12) * b * (3 * a ** 2 - b ** 2))
    return phi


def hu_moments(image, mask) -> np.ndarray:
    """Seven Hu invariants, compressed with ``sign(x) * log10(|x| + 1e-30)``.

    Masked-out pixels weigh zero.

    Raises:
        EmptyMask: the mask has no pixels.
    """
    return signed_log(hu_raw(image, mask))


@lru_cache(maxsize=None)
def zernike_orders(count: int = N_ZERNIKE) -> tuple:
    """``(n, m)`` pairs with n ascending and m = n mod 2 .. n step 2, from (1, 1)."""
    out = []
    n = 1
    while len(out) < count:
        out.extend((n, m) for m in range(n % 2, n + 1, 2))
        n += 1
    return tuple(out[:count])


def radial_poly(n: int, m: int, rho: np.ndarray) -> np.ndarray:
    m = abs(m)
    out = np.zeros_like(rho, dtype=float)
    for s in range((n - m) // 2 + 1):
        c = ((-1) ** s * factorial(n - s)
             / (factorial(s) * factorial((n + m) // 2 - s) * factorial((n - m) // 2 - s)))
        out += c * rho ** (n - 2 * s)
    return out


def zernike_complex(image, mask, orders=None) -> np.ndarray:
    """Complex Zernike moments ``A_nm`` of the masked intensity distribution.

    The unit disk is centered at the intensity centroid; its radius is twice
    the radius of gyration, which (unlike the farthest pixel) barely moves
    when the pixel grid aliases a rotated object.  Each pixel contributes
    area ``1 / r^2``; the rare pixels beyond the disk are kept.
    """
    orders = zernike_orders() if orders is None else orders
    f = _weights(image, mask)
    ys, xs = np.nonzero(f)
    vals = f[ys, xs]
    total = vals.sum()
    yc, xc = (ys * vals).sum() / total, (xs * vals).sum() / total
    dx, dy = xs - xc, -(ys - yc)  # y up, so angles turn counterclockwise on screen
    d2 = dx * dx + dy * dy
    r = max(2.0 * float(np.sqrt((vals * d2).sum() / total)), 1.0)
    rho = np.sqrt(d2) / r
    theta = np.arctan2(dy, dx)
    out = np.empty(len(orders), dtype=complex)
    for k, (n, mm) in enumerate(orders):
        kern = radial_poly(n, mm, rho) * np.exp(-1j * mm * theta)
        out[k] = (n + 1) / np.pi * np.sum(vals * kern) / (r * r)
    return out


def zernike_moments(image, mask) -> np.ndarray:
    """Magnitudes ``|A_nm|`` of the first 40 Zernike moments.

    Raises:
        EmptyMask: the mask has no pixels.
    """
    return np.abs(zernike_complex(image, mask))
