"""Flat ``section.key = value`` configuration for the whole pipeline.

Every key has a default below.  Values come from, in increasing precedence:
the defaults, a ``--config`` file, a ``--model-config`` file (``evaluate``
only), then command-line flags.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .classify import AnnConfig, ClassifierSpec, SvmConfig
from .errors import ConfigError, ConfigOutOfRange
from .preprocess import ClaheConfig
from .segment import CandidateFilter, SegmentConfig, SnakeParams
from .synth import SynthConfig

DEFAULTS = {
    "seed": 0,
    # preprocessing
    "clahe.enabled": True,
    "clahe.tiles_x": 8,
    "clahe.tiles_y": 8,
    "clahe.clip_limit": 2.0,
    "posterize.levels": 3,
    # candidates and refinement
    "candidates.min_area": 80,
    "candidates.max_area": 20000,
    "candidates.require_child": True,
    "segment.align": True,
    "snake.alpha": 0.4,
    "snake.beta": 0.2,
    "snake.gamma_step": 1.0,
    "snake.max_iters": 300,
    "snake.converge_eps": 0.05,
    "snake.external": 1.0,
    "snake.n_points": 100,
    "snake.sigma": 1.0,
    "snake.step_levels": 1,
    "snake.capture_sigma": 0.0,
    # synthetic corpus
    "synth.height": 192,
    "synth.width": 192,
    "synth.long_axis": (22.0, 26.0),
    "synth.short_axis": (9.0, 11.0),
    "synth.wall_width": 2.0,
    "synth.background": 240.0,
    "synth.wall": 60.0,
    "synth.body": 225.0,
    "synth.body_texture": 4.0,
    "synth.noise_sigma": 3.0,
    "synth.grid_lines": False,
    "synth.grid_spacing": 48,
    "synth.grid_depth": 5.0,
    "synth.rotate": True,
    "synth.jitter": 10.0,
    # classifier
    "classifier.kind": "svm",
    "svm.kernel": "rbf",
    "svm.C": 1.0,
    "svm.gamma": 0.01,
    "svm.tol": 1e-4,
    "svm.max_iter": 1_000_000,
    "ann.tau": 10,
    "ann.lr": 0.01,
    "ann.momentum": 0.9,
    "ann.batch": 32,
    "ann.epochs": 300,
    # feature selection
    "sfs.enabled": False,
    "sfs.criterion": "svm",
    "sfs.kernel": "linear",
    "sfs.C": 1.0,
    "sfs.gamma": 0.01,
    "sfs.tau": 10,
    "sfs.folds": 5,
    "sfs.max_features": 0,
    # evaluation
    "cv.folds": 10,
    "cv.grid": True,
    "hoover.tolerance": 0.8,
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_value(key: str, text):
    """Convert ``text`` to the type of ``key``'s default."""
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    default = DEFAULTS[key]
    if not isinstance(text, str):
        return text
    t = text.strip()
    try:
        if isinstance(default, bool):
            low = t.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(t)
        if isinstance(default, int):
            return int(t)
        if isinstance(default, float):
            return float(t)
        if isinstance(default, tuple):
            return tuple(float(v) for v in t.split(","))
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    return t


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = parse_value(key, value)
    return out


class PipelineConfig:
    """Resolved settings plus builders for each stage's config object."""

    def __init__(self, overrides=None):
        self.values = dict(DEFAULTS)
        for k, v in (overrides or {}).items():
            self.values[k] = parse_value(k, v)
        self.validate()

    def __getitem__(self, key):
        return self.values[key]

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(self.values.items())}

    def _section(self, prefix: str) -> dict:
        return {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith(prefix + ".")}

    def validate(self) -> None:
        try:
            self.segment_config()
            self.synth_template().validate()
            self.classifier_spec()
            self.criterion_spec()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        if self["cv.folds"] < 2 or self["sfs.folds"] < 2:
            raise ConfigOutOfRange("fold counts must be >= 2")
        if not 0.5 < self["hoover.tolerance"] <= 1.0:
            raise ConfigOutOfRange("hoover.tolerance must lie in (0.5, 1]")

    @property
    def seed(self) -> int:
        return int(self["seed"])

    def segment_config(self) -> SegmentConfig:
        clahe = ClaheConfig(self["clahe.tiles_x"], self["clahe.tiles_y"], self["clahe.clip_limit"])
        if not 1 <= self["posterize.levels"] <= 255:
            raise ConfigOutOfRange("posterize.levels must be in [1, 255]")
        return SegmentConfig(
            clahe=clahe, use_clahe=self["clahe.enabled"], levels=self["posterize.levels"],
            candidates=CandidateFilter(**self._section("candidates")),
            snake=SnakeParams(**self._section("snake")), align=self["segment.align"])

    def synth_template(self) -> SynthConfig:
        return SynthConfig(**self._section("synth"))

    def classifier_spec(self) -> ClassifierSpec:
        return ClassifierSpec(self["classifier.kind"], SvmConfig(**self._section("svm")),
                              AnnConfig(**self._section("ann"), seed=self.seed))

    def criterion_spec(self) -> ClassifierSpec:
        svm = SvmConfig(C=self["sfs.C"], kernel=self["sfs.kernel"], gamma=self["sfs.gamma"],
                        tol=self["svm.tol"], max_iter=self["svm.max_iter"])
        ann = dataclasses.replace(AnnConfig(**self._section("ann"), seed=self.seed),
                                  tau=self["sfs.tau"])
        return ClassifierSpec(self["sfs.criterion"], svm, ann)
