"""Soft-margin SVM with one-vs-one voting over the coenobium classes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigOutOfRange, DimensionMismatch, NonFiniteFeature, SingleClassInput
from .smo import smo_solve


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    kernel: str = "rbf"
    gamma: float = 0.01
    tol: float = 1e-4
    max_iter: int = 1_000_000

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigOutOfRange("SVM C must be > 0")
        if self.kernel not in ("linear", "rbf"):
            raise ConfigOutOfRange(f"unknown kernel {self.kernel!r}")
        if self.kernel == "rbf" and not self.gamma > 0:
            raise ConfigOutOfRange("rbf gamma must be > 0")
        if not self.tol > 0 or self.max_iter < 1:
            raise ConfigOutOfRange("SVM tol must be > 0 and max_iter >= 1")


def kernel_matrix(A, B, cfg: SvmConfig) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    dot = A @ B.T
    if cfg.kernel == "linear":
        return dot
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * dot
    return np.exp(-cfg.gamma * np.maximum(sq, 0.0))


@dataclass
class BinarySvm:
    """Machine for one class pair; positive decision means ``pos_label``."""

    pos_label: int
    neg_label: int
    support: np.ndarray   # (nsv, d)
    coef: np.ndarray      # alpha_t * y_t
    rho: float

    def decision(self, X, cfg: SvmConfig) -> np.ndarray:
        if len(self.coef) == 0:
            return np.full(len(X), -self.rho)
        return kernel_matrix(X, self.support, cfg) @ self.coef - self.rho


@dataclass
class SvmModel:
    config: SvmConfig
    classes: tuple
    machines: list = field(default_factory=list)
    n_features: int = 0

    def decision(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return np.stack([m.decision(X, self.config) for m in self.machines], axis=1)

    def predict(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        votes = np.zeros((len(X), len(self.classes)), dtype=int)
        pos = {c: k for k, c in enumerate(self.classes)}
        for m in self.machines:
            d = m.decision(X, self.config)
            win = np.where(d >= 0, pos[m.pos_label], pos[m.neg_label])
            votes[np.arange(len(X)), win] += 1
        # argmax returns the first maximum: ties go to the smaller label
        return np.asarray(self.classes)[np.argmax(votes, axis=1)]


def _check_X(X, d=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if d is not None and X.shape[1] != d:
        raise DimensionMismatch(f"expected {d} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("feature matrix has NaN or inf")
    return X


def train_binary(X, ypm, cfg: SvmConfig, K=None):
    """Dual solution for +1/-1 labels: ``(alpha, rho)``."""
    X = np.asarray(X, dtype=float)
    K = kernel_matrix(X, X, cfg) if K is None else K
    idx = np.arange(len(X), dtype=np.int64)
    alpha, rho, _ = smo_solve(np.ascontiguousarray(K), idx, np.asarray(ypm, dtype=float),
                              float(cfg.C), float(cfg.tol), int(cfg.max_iter))
    return alpha, float(rho)


def svm_train(X, y, cfg: SvmConfig = SvmConfig()) -> SvmModel:
    """One-vs-one soft-margin SVMs for every pair of classes present in ``y``.

    Raises:
        SingleClassInput: fewer than two classes.
        NonFiniteFeature: NaN or inf in ``X``.
    """
    X = _check_X(X)
    y = np.asarray(y)
    classes = tuple(sorted(int(c) for c in np.unique(y)))
    if len(classes) < 2:
        raise SingleClassInput("SVM training needs at least two classes")
    K = kernel_matrix(X, X, cfg)
    model = SvmModel(cfg, classes, n_features=X.shape[1])
    for ia, a in enumerate(classes):
        for b in classes[ia + 1:]:
            sel = np.nonzero((y == a) | (y == b))[0]
            ypm = np.where(y[sel] == a, 1.0, -1.0)
            Ks = np.ascontiguousarray(K[np.ix_(sel, sel)])
            alpha, rho = train_binary(X[sel], ypm, cfg, Ks)
            sv = alpha > 0
            model.machines.append(BinarySvm(a, b, X[sel][sv].copy(), (alpha * ypm)[sv], rho))
    return model


def svm_predict(model: SvmModel, X) -> np.ndarray:
    return model.predict(X)


def dual_objective(alpha, ypm, K) -> float:
    ay = alpha * ypm
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def primal_objective(alpha, ypm, rho, K, C) -> float:
    """``1/2 |w|^2 + C sum hinge`` evaluated from the dual variables."""
    ay = alpha * ypm
    f = K @ ay - rho
    hinge = np.maximum(0.0, 1.0 - ypm * f)
    return float(0.5 * ay @ K @ ay + C * hinge.sum())
