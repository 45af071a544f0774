"""Greedy active contour (snake) refinement.

Each point looks at the eight compass moves around it, at step sizes
``gamma_step``, ``gamma_step/2``, ... (``step_levels`` halvings), and takes the
one that lowers the snake energy most.  The finer steps let weak forces act
that could never pay for a whole-pixel move against the tension of close
neighbors.  Points are swept in interleaved color
classes (indices at least three apart), so all points of one class can move
together without touching each other's energy terms; every accepted move
strictly lowers the total energy.

Energy, with ``d`` the initial mean point spacing::

    E = alpha/d^2 * sum |v_i - v_{i-1}|^2
      + beta/d^2  * sum |v_{i-1} - 2 v_i + v_{i+1}|^2
      - external  * sum G(v_i)

``G`` is the squared gradient magnitude of the Gaussian-smoothed image scaled
to ``[0, 1]``.  With ``capture_sigma > sigma`` the snake first settles on a
coarser field (wider capture range), then is refined on the fine one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage import measure
from skimage.draw import polygon as draw_polygon

from ..core import Contour, RegionPatch
from ..errors import ConfigOutOfRange, ContourCollapsed

_DIRECTIONS = np.array([(dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1)
                        if (dx, dy) != (0, 0)], dtype=float)


def candidate_offsets(step: float, levels: int) -> np.ndarray:
    """Stay (row 0) followed by the 8 compass moves at each halved step size."""
    rings = [_DIRECTIONS * (step * 0.5 ** k) for k in range(levels)]
    return np.vstack([np.zeros((1, 2))] + rings)


@dataclass(frozen=True)
class SnakeParams:
    alpha: float = 0.4
    beta: float = 0.2
    gamma_step: float = 1.0
    max_iters: int = 300
    converge_eps: float = 0.05
    external: float = 1.0
    n_points: int = 100
    sigma: float = 1.0
    step_levels: int = 1
    capture_sigma: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigOutOfRange("snake weights must be >= 0")
        if not self.gamma_step > 0:
            raise ConfigOutOfRange("snake step must be > 0")
        if self.max_iters < 1:
            raise ConfigOutOfRange("snake max_iters must be >= 1")
        if not self.converge_eps > 0:
            raise ConfigOutOfRange("snake converge_eps must be > 0")
        if self.n_points < 5:
            raise ConfigOutOfRange("snake needs at least 5 points")
        if self.step_levels < 1:
            raise ConfigOutOfRange("snake step_levels must be >= 1")
        if self.sigma < 0 or self.capture_sigma < 0:
            raise ConfigOutOfRange("snake smoothing scales must be >= 0")


def external_field(img: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    f = np.asarray(img, dtype=float)
    if sigma > 0:
        f = ndimage.gaussian_filter(f, sigma, mode="nearest")
    gy, gx = np.gradient(f)
    g = gx * gx + gy * gy
    top = g.max()
    return g / top if top > 0 else g


def resample_closed(points: np.ndarray, n: int) -> np.ndarray:
    """``n`` points equally spaced by arc length along a closed polyline."""
    p = np.asarray(points, dtype=float)
    ring = np.vstack([p, p[:1]])
    seg = np.hypot(*np.diff(ring, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return np.repeat(p[:1], n, axis=0)
    t = np.arange(n) * (s[-1] / n)
    return np.stack([np.interp(t, s, ring[:, 0]), np.interp(t, s, ring[:, 1])], axis=1)


def _colors(n: int) -> list[np.ndarray]:
    r = n % 3
    base = np.arange(n - r)
    groups = [base[base % 3 == k] for k in range(3)]
    groups += [np.array([i]) for i in range(n - r, n)]
    return groups


def _sample(field: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return ndimage.map_coordinates(field, [pts[..., 1].ravel(), pts[..., 0].ravel()],
                                   order=1, mode="nearest").reshape(pts.shape[:-1])


def snake_energy(pts: np.ndarray, field: np.ndarray, params: SnakeParams, spacing: float) -> float:
    prev = np.roll(pts, 1, axis=0)
    nxt = np.roll(pts, -1, axis=0)
    cont = np.sum((pts - prev) ** 2, axis=1)
    curv = np.sum((prev - 2 * pts + nxt) ** 2, axis=1)
    d2 = spacing * spacing
    return float(params.alpha / d2 * cont.sum() + params.beta / d2 * curv.sum()
                 - params.external * _sample(field, pts).sum())


def greedy_snake(points: np.ndarray, field: np.ndarray, params: SnakeParams = SnakeParams()):
    """Run the greedy minimization.

    Returns:
        ``(points, energies)`` where ``energies[k]`` is the total energy after
        ``k`` sweeps (``energies[0]`` is the initial energy).
    """
    pts = np.array(points, dtype=float)
    n = len(pts)
    if n < 5:
        raise ConfigOutOfRange("snake needs at least 5 points")
    h, w = field.shape
    spacing = float(np.mean(np.hypot(*(np.roll(pts, -1, axis=0) - pts).T)))
    if spacing <= 0:
        raise ContourCollapsed("initial contour has zero length")
    d2 = spacing * spacing
    ka, kb, ke = params.alpha / d2, params.beta / d2, params.external
    offsets = candidate_offsets(params.gamma_step, params.step_levels)
    groups = _colors(n)
    energies = [snake_energy(pts, field, params, spacing)]
    for _ in range(params.max_iters):
        moved = 0
        for idx in groups:
            cand = pts[idx][:, None, :] + offsets[None, :, :]  # (B, candidates, 2)
            pm2 = pts[(idx - 2) % n][:, None, :]
            pm1 = pts[(idx - 1) % n][:, None, :]
            pp1 = pts[(idx + 1) % n][:, None, :]
            pp2 = pts[(idx + 2) % n][:, None, :]
            e = ka * (np.sum((cand - pm1) ** 2, axis=2) + np.sum((pp1 - cand) ** 2, axis=2))
            e += kb * (np.sum((pm2 - 2 * pm1 + cand) ** 2, axis=2)
                       + np.sum((pm1 - 2 * cand + pp1) ** 2, axis=2)
                       + np.sum((cand - 2 * pp1 + pp2) ** 2, axis=2))
            e -= ke * _sample(field, cand)
            outside = ((cand[..., 0] < 0) | (cand[..., 0] > w - 1)
                       | (cand[..., 1] < 0) | (cand[..., 1] > h - 1))
            e[outside] = np.inf
            best = np.argmin(e, axis=1)
            gain = e[np.arange(len(idx)), 0] - e[np.arange(len(idx)), best]
            go = (best != 0) & (gain > 1e-12)
            if go.any():
                pts[idx[go]] = cand[np.arange(len(idx))[go], best[go]]
                moved += int(go.sum())
        energies.append(snake_energy(pts, field, params, spacing))
        if moved < params.converge_eps * n:
            break
    return pts, energies


def fill_polygon(points: np.ndarray, shape) -> np.ndarray:
    """Pixels whose centers fall inside the polygon."""
    p = np.asarray(points, dtype=float)
    rr, cc = draw_polygon(p[:, 1], p[:, 0], shape=shape)
    out = np.zeros(shape, dtype=bool)
    out[rr, cc] = True
    return out


def initial_contour(mask: np.ndarray, n: int) -> np.ndarray:
    """Boundary of the largest mask component, resampled to ``n`` points.

    The boundary runs along pixel edges (half-integer coordinates), so a
    polygon fill of the untouched contour gives back the mask.
    """
    lab, num = ndimage.label(mask, structure=np.ones((3, 3), bool))
    if num == 0:
        raise ContourCollapsed("empty mask")
    sizes = np.bincount(lab.ravel())[1:]
    region = ndimage.binary_fill_holes(lab == (int(np.argmax(sizes)) + 1))
    loops = measure.find_contours(np.pad(region, 1).astype(float), 0.5)
    ring = max(loops, key=len)[:-1, ::-1] - 1.0  # (row, col) -> (x, y), undo padding
    return resample_closed(ring, n)


def snake_refine(patch: RegionPatch, params: SnakeParams = SnakeParams()) -> Contour:
    """Refine the patch boundary with the greedy snake.

    Raises:
        ContourCollapsed: the refined contour encloses fewer than 4 pixels.
    """
    pts = initial_contour(patch.mask, params.n_points)
    if params.capture_sigma > params.sigma:
        pts, _ = greedy_snake(pts, external_field(patch.image, params.capture_sigma), params)
    pts, _ = greedy_snake(pts, external_field(patch.image, params.sigma), params)
    filled = fill_polygon(pts, patch.mask.shape)
    area = int(filled.sum())
    if area < 4:
        raise ContourCollapsed(f"refined contour encloses {area} px")
    return Contour(points=pts, area=area)
