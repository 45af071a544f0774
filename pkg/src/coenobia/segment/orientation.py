"""Orientation estimate from the gradient spectrum, and patch rotation."""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import ndimage

from ..core import RegionPatch
from ..errors import DegenerateSpectrum
from .snake import fill_polygon

SPECTRUM_PERCENTILE = 99.0
# minor/major spread of the gated spectral points above which no direction dominates
ISOTROPY_LIMIT = 0.8


def _wrap_deg(a: float) -> float:
    """Map an axial angle to [-90, 90)."""
    return (a + 90.0) % 180.0 - 90.0


def gradient_magnitude(img: np.ndarray) -> np.ndarray:
    f = np.asarray(img, dtype=float)
    gx = ndimage.sobel(f, axis=1, mode="nearest")
    gy = ndimage.sobel(f, axis=0, mode="nearest")
    return np.hypot(gx, gy)


def spectrum_points(img: np.ndarray, mask=None) -> np.ndarray:
    """Frequency coordinates ``(u, v)`` of the strongest gradient-spectrum bins.

    ``v`` points up on screen so angles read counterclockwise.
    """
    mag = gradient_magnitude(img)
    if mask is not None:
        mag = mag * ndimage.binary_dilation(mask, iterations=2)
    n = 1 << int(math.ceil(math.log2(max(mag.shape))))
    spec = np.abs(np.fft.fftshift(np.fft.fft2(mag, s=(n, n))))
    c = n // 2
    spec[c, c] = 0.0
    # symmetric bins differ only by rounding; keep them together at the gate
    gate = np.percentile(spec, SPECTRUM_PERCENTILE) * (1.0 - 1e-9)
    rows, cols = np.nonzero(spec > gate)
    return np.stack([cols - c, -(rows - c)], axis=1).astype(float)


def estimate_orientation(patch: RegionPatch) -> float:
    """Orientation of the alga in degrees, in ``[-90, 90)``.

    The Sobel magnitude of the patch is Fourier transformed; the bins above
    the 99th magnitude percentile are fitted with a least-squares line through
    the spectrum origin (fitted x-on-y when the cloud is steeper than 45
    degrees).  Edges run
    perpendicular to their spectral line, so the result is that line's angle
    plus 90 degrees.

    Raises:
        DegenerateSpectrum: fewer than 3 gated points, or the points show no
            dominant direction.
    """
    img = np.asarray(patch.image)
    if min(img.shape) < 8:
        raise DegenerateSpectrum("patch smaller than 8x8")
    pts = spectrum_points(img, patch.mask)
    if len(pts) < 3:
        raise DegenerateSpectrum(f"only {len(pts)} spectral points above the gate")
    u, v = pts[:, 0], pts[:, 1]
    suu, svv, suv = float(u @ u), float(v @ v), float(u @ v)
    evals = np.linalg.eigvalsh(np.array([[suu, suv], [suv, svv]]))
    if evals[1] <= 0 or evals[0] / evals[1] > ISOTROPY_LIMIT:
        raise DegenerateSpectrum("spectrum has no dominant direction")
    # regress on the axis with the larger spread: a steep cloud is fitted x-on-y
    if suu >= svv:
        spectral = math.degrees(math.atan(suv / suu))
    else:
        spectral = math.degrees(math.atan2(1.0, suv / svv))
    return _wrap_deg(spectral + 90.0)


def orientation_or_zero(patch: RegionPatch) -> tuple[float, bool]:
    """``(angle, low_confidence)``; falls back to 0 degrees on a degenerate spectrum."""
    try:
        return estimate_orientation(patch), False
    except DegenerateSpectrum:
        return 0.0, True


def _rotated_shape(h: int, w: int, angle: float) -> tuple[int, int]:
    c, s = abs(math.cos(math.radians(angle))), abs(math.sin(math.radians(angle)))
    ow = int(math.ceil(round(w * c + h * s, 6)))
    oh = int(math.ceil(round(w * s + h * c, 6)))
    return max(oh, 1), max(ow, 1)


def rotation_coords(in_shape, out_shape, angle: float):
    """Source ``(row, col)`` grids for rotating content by ``-angle`` degrees.

    Angles are counterclockwise on screen; both images rotate about their
    centers.
    """
    h, w = in_shape
    oh, ow = out_shape
    t = math.radians(angle)
    c, s = math.cos(t), math.sin(t)
    yo, xo = np.mgrid[0:oh, 0:ow].astype(float)
    xo -= (ow - 1) / 2.0
    yo -= (oh - 1) / 2.0
    # output content = input content turned clockwise by `angle`; undo that
    xs = c * xo + s * yo + (w - 1) / 2.0
    ys = -s * xo + c * yo + (h - 1) / 2.0
    return ys, xs


def _snap(a: np.ndarray) -> np.ndarray:
    r = np.round(a)
    return np.where(np.abs(a - r) < 1e-9, r, a)


def rotate_image(img, angle: float, fill: float, order: int = 1, out_shape=None):
    img = np.asarray(img)
    out_shape = out_shape or _rotated_shape(*img.shape, angle)
    ys, xs = rotation_coords(img.shape, out_shape, angle)
    return ndimage.map_coordinates(img.astype(float), [_snap(ys), _snap(xs)], order=order,
                                   mode="constant", cval=float(fill))


def border_median(img: np.ndarray) -> float:
    img = np.asarray(img)
    edge = np.concatenate([img[0], img[-1], img[1:-1, 0], img[1:-1, -1]])
    return float(np.median(edge))


def rotate_patch(patch: RegionPatch, angle: float) -> RegionPatch:
    """Rotate image (bilinear) and mask (nearest) by ``-angle`` degrees.

    The canvas grows to fit the rotated content and is filled with the median
    border intensity.
    """
    if angle % 360.0 == 0.0:
        return patch
    img = np.asarray(patch.image)
    fill = border_median(img)
    shape = _rotated_shape(*img.shape, angle)
    out = rotate_image(img, angle, fill, order=1, out_shape=shape)
    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    mask = rotate_image(patch.mask.astype(float), angle, 0.0, order=0, out_shape=shape) > 0.5
    return dataclasses.replace(patch, image=out, mask=mask,
                               rotation_deg=patch.rotation_deg + angle, contour=None)


def canvas_to_crop(points, canvas_shape, crop_shape, angle: float) -> np.ndarray:
    """Map ``(x, y)`` points of a rotated canvas back onto the unrotated crop."""
    p = np.asarray(points, dtype=float)
    oh, ow = canvas_shape
    h, w = crop_shape
    t = math.radians(angle)
    c, s = math.cos(t), math.sin(t)
    xo = p[:, 0] - (ow - 1) / 2.0
    yo = p[:, 1] - (oh - 1) / 2.0
    return np.stack([c * xo + s * yo + (w - 1) / 2.0, -s * xo + c * yo + (h - 1) / 2.0], axis=1)


def unrotate_mask(patch: RegionPatch) -> np.ndarray:
    """Patch mask on the unrotated crop grid.

    A refined contour is mapped back exactly and filled; otherwise the mask
    is resampled with nearest neighbor.
    """
    if patch.rotation_deg % 360.0 == 0.0 and patch.mask.shape == tuple(patch.crop_shape):
        return patch.mask.copy()
    if patch.contour is not None:
        pts = canvas_to_crop(patch.contour, patch.mask.shape, patch.crop_shape, patch.rotation_deg)
        return fill_polygon(pts, patch.crop_shape)
    # inverse map: a crop pixel lands at these rotated-canvas coordinates
    ys, xs = rotation_coords(patch.mask.shape, patch.crop_shape, -patch.rotation_deg)
    return ndimage.map_coordinates(patch.mask.astype(float), [_snap(ys), _snap(xs)], order=0,
                                   mode="constant", cval=0.0) > 0.5


def patch_frame_mask(patch: RegionPatch, frame_shape) -> np.ndarray:
    """Full-frame boolean mask of a (possibly rotated) patch."""
    out = np.zeros(frame_shape, dtype=bool)
    crop = unrotate_mask(patch)
    x0, y0 = patch.offset
    h, w = crop.shape
    out[y0:y0 + h, x0:x0 + w] = crop
    return out
