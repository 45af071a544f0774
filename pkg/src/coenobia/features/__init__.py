"""The 215-dim descriptor vector, z-scoring and ``features.csv`` I/O."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import FEATURE_BLOCKS, N_FEATURES, LabeledDataset, check_label
from ..errors import (BadLabel, CoenobiaError, DescriptorError, DimensionMismatch, MalformedRow,
                      NonFiniteFeature, TooFewSamples)
from .hog import hog_descriptor
from .moments import hu_moments, zernike_moments
from .texture import haralick_features, lbp_histogram

__all__ = [
    "hu_moments", "hog_descriptor", "zernike_moments", "lbp_histogram", "haralick_features",
    "extract_all", "extract_many", "Standardizer", "write_features", "read_features",
    "FEATURE_NAMES",
]

FEATURE_NAMES = tuple(f"f{i:03d}" for i in range(N_FEATURES))

_BLOCK_FUNCS = {
    "hu": lambda img, m: hu_moments(img, m)[:7],
    "hog": hog_descriptor,
    "zernike": zernike_moments,
    "lbp": lbp_histogram,
    "haralick": haralick_features,
}


def _unpack(patch):
    if isinstance(patch, tuple):
        image, mask = patch
    else:
        image, mask = patch.image, patch.mask
    return np.asarray(image), np.asarray(mask, dtype=bool)


def extract_all(patch) -> np.ndarray:
    """Concatenate the five descriptor blocks (Hu, HOG, Zernike, LBP, Haralick).

    ``patch`` is a :class:`~coenobia.core.RegionPatch` or an ``(image, mask)``
    pair.

    Raises:
        DescriptorError: a block failed or produced non-finite values;
            ``.block`` names it.
    """
    image, mask = _unpack(patch)
    out = np.empty(N_FEATURES)
    for name, start, stop in FEATURE_BLOCKS:
        try:
            vals = np.asarray(_BLOCK_FUNCS[name](image, mask), dtype=float)
        except CoenobiaError as exc:
            raise DescriptorError(name, exc) from exc
        if vals.shape != (stop - start,):
            raise DescriptorError(name, f"expected {stop - start} values, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise DescriptorError(name, NonFiniteFeature("non-finite descriptor value"))
        out[start:stop] = vals
    return out


def extract_many(patches) -> np.ndarray:
    return np.array([extract_all(p) for p in patches]).reshape(-1, N_FEATURES)


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension z-score with population std; zero-variance dims map to 0."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or len(X) < 2:
            raise TooFewSamples("standardization needs at least 2 samples")
        return cls(X.mean(axis=0), X.std(axis=0))

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != len(self.mean):
            raise DimensionMismatch(f"expected {len(self.mean)} features, got {X.shape[-1]}")
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (X - self.mean) / safe, 0.0)


def _block_comment() -> str:
    return "# blocks: " + " ".join(f"{n}=f{a:03d}-f{b - 1:03d}" for n, a, b in FEATURE_BLOCKS)


def write_features(path, ids, X, labels) -> None:
    """Write ``sample_id,label,f000..f214`` with full float precision."""
    X = np.asarray(X, dtype=float)
    buf = io.StringIO(newline="")
    buf.write(_block_comment() + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "label", *[f"f{i:03d}" for i in range(X.shape[1])]])
    for sid, lab, row in zip(ids, labels, X):
        w.writerow([sid, "" if lab is None else int(lab), *[repr(float(v)) for v in row]])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_features(path) -> LabeledDataset:
    """Parse a features CSV into a :class:`LabeledDataset`.

    Raises:
        MalformedRow: bad header or a row with the wrong column count.
        NonFiniteFeature: a NaN/inf or unparsable value.
        BadLabel: a label outside 1, 2, 4, 8, or a blank label.
    """
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines()
             if ln.strip() and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows or rows[0][:2] != ["sample_id", "label"]:
        raise MalformedRow(f"{path}: header must start with 'sample_id,label'")
    width = len(rows[0])
    ids, labels, X = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise MalformedRow(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
        lab = check_label(row[1])
        if lab is None:
            raise BadLabel(f"{path}: row {lineno} has no label")
        try:
            vals = [float(v) for v in row[2:]]
        except ValueError:
            raise NonFiniteFeature(f"{path}: row {lineno} has an unparsable value") from None
        if not np.all(np.isfinite(vals)):
            raise NonFiniteFeature(f"{path}: row {lineno} has a non-finite value")
        ids.append(row[0])
        labels.append(lab)
        X.append(vals)
    X = np.array(X, dtype=float).reshape(len(ids), width - 2)
    return LabeledDataset(ids, X, np.array(labels, dtype=int), str(path))
