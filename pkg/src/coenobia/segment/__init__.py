"""Candidate detection, orientation normalization and border refinement."""

from __future__ import annotations

import dataclasses
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..core import CROP_MARGIN, RegionPatch, as_gray
from ..errors import AllSameIntensity, ConfigOutOfRange, ContourCollapsed
from ..preprocess import ClaheConfig, binarize, clahe, otsu_threshold, posterize
from .contours import ContourForest, find_contours, trace_boundary
from .orientation import (estimate_orientation, orientation_or_zero, patch_frame_mask,
                          rotate_patch, unrotate_mask)
from .snake import SnakeParams, fill_polygon, greedy_snake, snake_refine

log = logging.getLogger(__name__)

__all__ = [
    "CandidateFilter", "SegmentConfig", "SegmentationResult", "SnakeParams",
    "find_contours", "trace_boundary", "select_candidates", "estimate_orientation",
    "rotate_patch", "snake_refine", "greedy_snake", "segment_image", "patch_frame_mask",
    "unrotate_mask", "foreground_mask",
]


@dataclass(frozen=True)
class CandidateFilter:
    min_area: int = 80
    max_area: int = 20000
    require_child: bool = True

    def __post_init__(self):
        if not 0 < self.min_area < self.max_area:
            raise ConfigOutOfRange("candidate filter needs 0 < min_area < max_area")


@dataclass(frozen=True)
class SegmentConfig:
    clahe: ClaheConfig = ClaheConfig()
    use_clahe: bool = True
    levels: int = 3
    candidates: CandidateFilter = CandidateFilter()
    snake: SnakeParams = SnakeParams()
    align: bool = True


@dataclass
class SegmentationResult:
    patches: list = field(default_factory=list)
    drops: list = field(default_factory=list)  # (region index, reason)
    threshold: int | None = None

    @property
    def drop_counts(self) -> Counter:
        return Counter(reason for _, reason in self.drops)


def foreground_mask(img: np.ndarray, cfg: SegmentConfig = SegmentConfig()):
    """``(mask, threshold)`` after equalization, posterization and Otsu.

    Raises:
        AllSameIntensity: the posterized frame is flat.
    """
    work = clahe(img, cfg.clahe) if cfg.use_clahe else as_gray(img)
    work = posterize(work, cfg.levels)
    t = otsu_threshold(work)
    return binarize(work, t), t


def _screen(forest: ContourForest, filt: CandidateFilter):
    """Yield ``(region_index, contour_id, drop_reason_or_None)`` for top-level contours."""
    for k, i in enumerate(forest.roots()):
        c = forest[i]
        if not filt.min_area <= c.area <= filt.max_area:
            yield k, i, "size"
        elif filt.require_child and not c.children:
            yield k, i, "no_child"
        else:
            yield k, i, None


def _cut_patch(forest: ContourForest, i: int, src: np.ndarray, source_id: str, index: int):
    h, w = src.shape
    pts = forest[i].points
    x0 = max(int(pts[:, 0].min()) - CROP_MARGIN, 0)
    y0 = max(int(pts[:, 1].min()) - CROP_MARGIN, 0)
    x1 = min(int(pts[:, 0].max()) + CROP_MARGIN + 1, w)
    y1 = min(int(pts[:, 1].max()) + CROP_MARGIN + 1, h)
    filled = forest.filled(i)[y0:y1, x0:x1]
    return RegionPatch(image=src[y0:y1, x0:x1].copy(), mask=filled, offset=(x0, y0),
                       source_id=source_id, index=index)


def select_candidates(forest: ContourForest, filt: CandidateFilter, src: np.ndarray,
                      source_id: str = "") -> list[RegionPatch]:
    """Top-level contours within the area bounds (and with a hole, if required).

    Each survivor becomes a patch: the source crop around its bounding box
    plus a margin, and the filled contour as mask.
    """
    src = as_gray(src)
    return [_cut_patch(forest, i, src, source_id, k)
            for k, i, reason in _screen(forest, filt) if reason is None]


def refine_patch(patch: RegionPatch, cfg: SegmentConfig) -> RegionPatch:
    """Orientation normalization followed by snake refinement of one patch."""
    if cfg.align:
        angle, low = orientation_or_zero(patch)
        patch = dataclasses.replace(patch, orientation_deg=angle, low_confidence=low)
        patch = rotate_patch(patch, angle)
    contour = snake_refine(patch, cfg.snake)
    mask = fill_polygon(contour.points, patch.mask.shape)
    return dataclasses.replace(patch, mask=mask, contour=contour.points)


def segment_image(img: np.ndarray, cfg: SegmentConfig = SegmentConfig(),
                  source_id: str = "") -> SegmentationResult:
    """Full segmentation of one frame.

    Candidates that fail refinement are dropped and counted, never fatal.
    """
    img = as_gray(img)
    result = SegmentationResult()
    try:
        mask, result.threshold = foreground_mask(img, cfg)
    except AllSameIntensity:
        return result
    forest = find_contours(mask)
    for k, i, reason in _screen(forest, cfg.candidates):
        if reason is not None:
            result.drops.append((k, reason))
            continue
        patch = _cut_patch(forest, i, img, source_id, k)
        try:
            result.patches.append(refine_patch(patch, cfg))
        except ContourCollapsed as exc:
            log.info("%s#%d dropped: %s", source_id, k, exc)
            result.drops.append((k, "collapsed"))
    return result
