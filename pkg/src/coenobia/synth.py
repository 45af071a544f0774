"""Synthetic coenobium frames with exact ground truth.

Cells are ellipses with a dark wall and a textured body on a bright
background.  Cells of a coenobium sit side by side along their short axes
(1x2, 1x4 or 2x2, 2x4) and overlap by one pixel so the walls merge into one
connected outline.  Bodies are only slightly darker than the background, so
after equalization and posterization they land in the background level and
show up as holes of that outline.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import CLASSES, ManifestRow, mask_to_image, save_image, substream, write_manifest
from .errors import ConfigOutOfRange, IoFailure


@dataclass(frozen=True)
class SynthConfig:
    height: int = 192
    width: int = 192
    cells: int = 1
    long_axis: tuple = (22.0, 26.0)   # semi-axis range along the cell length
    short_axis: tuple = (9.0, 11.0)   # semi-axis range across the cell
    wall_width: float = 2.0
    background: float = 240.0
    wall: float = 60.0
    body: float = 225.0
    body_texture: float = 4.0
    noise_sigma: float = 3.0
    grid_lines: bool = False
    grid_spacing: int = 48
    grid_depth: float = 5.0
    rotate: bool = True
    jitter: float = 10.0
    seed: int = 0

    def validate(self):
        if self.cells not in CLASSES:
            raise ConfigOutOfRange(f"cells must be one of {CLASSES}, got {self.cells}")
        lo_l, hi_l = self.long_axis
        lo_s, hi_s = self.short_axis
        if not (0 < lo_l <= hi_l and 0 < lo_s <= hi_s):
            raise ConfigOutOfRange("ellipse axes must be positive ranges")
        if not 0 < self.wall_width < lo_s:
            raise ConfigOutOfRange("wall width must be positive and thinner than a cell")
        for name in ("background", "wall", "body"):
            if not 0 <= getattr(self, name) <= 255:
                raise ConfigOutOfRange(f"{name} intensity outside [0, 255]")
        if not self.body + self.body_texture < self.background:
            raise ConfigOutOfRange("cell bodies must stay darker than the background")
        if self.noise_sigma < 0 or self.height < 16 or self.width < 16:
            raise ConfigOutOfRange("bad frame size or noise level")


def _layout(cells: int, rng: np.random.Generator) -> tuple[int, int]:
    """(rows, columns) of the cell arrangement."""
    if cells == 4:
        return (1, 4) if rng.random() < 0.5 else (2, 2)
    return {1: (1, 1), 2: (1, 2), 8: (2, 4)}[cells]


def render_coenobium(cfg: SynthConfig):
    """Noise-free rendering: ``(image_float, foreground_mask)``."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    rows, cols = _layout(cfg.cells, rng)
    a = rng.uniform(*cfg.long_axis)
    b = rng.uniform(*cfg.short_axis)
    theta = rng.uniform(0.0, np.pi) if cfg.rotate else 0.0
    cx = (cfg.width - 1) / 2.0 + rng.uniform(-cfg.jitter, cfg.jitter)
    cy = (cfg.height - 1) / 2.0 + rng.uniform(-cfg.jitter, cfg.jitter)

    yy, xx = np.mgrid[0:cfg.height, 0:cfg.width].astype(float)
    dx, dy = xx - cx, yy - cy
    c, s = np.cos(theta), np.sin(theta)
    u = c * dx + s * dy       # coenobium frame: cells side by side along u
    v = -s * dx + c * dy

    inside = np.zeros((cfg.height, cfg.width), dtype=bool)
    wall = np.zeros_like(inside)
    pitch_u = 2 * b - 1.0
    pitch_v = 2 * a - 1.0
    for r in range(rows):
        for k in range(cols):
            jit = rng.uniform(0.95, 1.05, size=2)
            ai, bi = a * jit[0], b * jit[1]
            cu = (k - (cols - 1) / 2.0) * pitch_u
            cv = (r - (rows - 1) / 2.0) * pitch_v
            q = ((u - cu) / bi) ** 2 + ((v - cv) / ai) ** 2
            qi = ((u - cu) / (bi - cfg.wall_width)) ** 2 + ((v - cv) / (ai - cfg.wall_width)) ** 2
            cell = q <= 1.0
            inside |= cell
            wall |= cell & (qi > 1.0)
    # pockets enclosed between neighboring cells are filled with wall matrix
    pockets = ndimage.binary_fill_holes(inside) & ~inside
    inside |= pockets
    wall |= pockets

    texture = ndimage.gaussian_filter(rng.standard_normal(inside.shape), 2.0)
    texture *= cfg.body_texture / max(texture.std(), 1e-12)
    texture = np.clip(texture, -cfg.body_texture, cfg.body_texture)
    img = np.full(inside.shape, cfg.background, dtype=float)
    if cfg.grid_lines:
        on_grid = ((np.round(xx) % cfg.grid_spacing) == 0) | ((np.round(yy) % cfg.grid_spacing) == 0)
        img[on_grid] -= cfg.grid_depth
    img[inside] = cfg.body + texture[inside]
    img[wall] = cfg.wall
    return img, inside


def generate_coenobium(cfg: SynthConfig):
    """One noisy frame: ``(image uint8, ground-truth mask, label)``."""
    img, gt = render_coenobium(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    noisy = img + rng.normal(0.0, cfg.noise_sigma, img.shape) if cfg.noise_sigma > 0 else img
    out = np.clip(np.floor(noisy + 0.5), 0, 255).astype(np.uint8)
    return out, gt, cfg.cells


def frame_configs(n_per_class: int, template: SynthConfig, seed: int):
    """``(name, cfg)`` for ``4 * n_per_class`` frames, classes interleaved."""
    if n_per_class < 1:
        raise ConfigOutOfRange("need at least one frame per class")
    out = []
    for i in range(n_per_class):
        for cells in CLASSES:
            idx = len(out)
            frame_seed = int(substream(seed, "synth", idx).integers(0, 2**31 - 1))
            out.append((f"{idx:05d}", dataclasses.replace(template, cells=cells, seed=frame_seed)))
    return out


def gt_path_for(image_path) -> Path:
    """Ground-truth mask path convention: ``img_X.pgm`` -> ``gt_X.pgm``."""
    p = Path(image_path)
    stem = p.stem
    name = "gt_" + stem[4:] if stem.startswith("img_") else stem + "_gt"
    return p.with_name(name + ".pgm")


def generate_dataset(n_per_class: int, out_dir, template: SynthConfig = SynthConfig(),
                     seed: int = 0) -> list[ManifestRow]:
    """Write frames, ground-truth masks and ``manifest.csv`` into ``out_dir``."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        rows = []
        for name, cfg in frame_configs(n_per_class, template, seed):
            img, gt, label = generate_coenobium(cfg)
            ipath = out_dir / f"img_{name}.pgm"
            save_image(ipath, img)
            save_image(gt_path_for(ipath), mask_to_image(gt))
            rows.append(ManifestRow(ipath, label))
        write_manifest(out_dir / "manifest.csv", rows)
    except OSError as exc:
        raise IoFailure(f"cannot write synthetic corpus to {out_dir}: {exc}") from exc
    return rows
