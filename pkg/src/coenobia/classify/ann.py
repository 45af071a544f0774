"""Two-hidden-layer perceptron: tanh units, softmax output, momentum SGD."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import substream
from ..errors import ConfigOutOfRange, SingleClassInput
from .svm import _check_X

TAU_GRID = tuple(range(5, 61, 5))


@dataclass(frozen=True)
class AnnConfig:
    tau: int = 10
    lr: float = 0.01
    momentum: float = 0.9
    batch: int = 32
    epochs: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.tau < 1:
            raise ConfigOutOfRange("tau must be >= 1")
        if not self.lr > 0 or not 0 <= self.momentum < 1:
            raise ConfigOutOfRange("need lr > 0 and 0 <= momentum < 1")
        if self.batch < 1 or self.epochs < 1:
            raise ConfigOutOfRange("batch and epochs must be >= 1")


def init_params(n_in: int, tau: int, n_out: int, rng: np.random.Generator) -> list:
    """``[W1, b1, W2, b2, W3, b3]``; weights uniform in +-1/sqrt(fan_in), biases zero."""
    params = []
    for fan_in, fan_out in ((n_in, tau), (tau, tau), (tau, n_out)):
        lim = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params, X):
    W1, b1, W2, b2, W3, b3 = params
    h1 = np.tanh(X @ W1 + b1)
    h2 = np.tanh(h1 @ W2 + b2)
    z = h2 @ W3 + b3
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    return h1, h2, p


def cross_entropy(params, X, Y) -> float:
    p = forward(params, X)[2]
    return -float(np.sum(Y * np.log(np.clip(p, 1e-300, None)))) / len(X)


def loss_and_grad(params, X, Y):
    """Mean cross-entropy over the batch and its gradient (``Y`` one-hot)."""
    W1, b1, W2, b2, W3, b3 = params
    h1, h2, p = forward(params, X)
    n = len(X)
    loss = -float(np.sum(Y * np.log(np.clip(p, 1e-300, None)))) / n
    dz = (p - Y) / n
    gW3 = h2.T @ dz
    gb3 = dz.sum(axis=0)
    d2 = (dz @ W3.T) * (1.0 - h2 * h2)
    gW2 = h1.T @ d2
    gb2 = d2.sum(axis=0)
    d1 = (d2 @ W2.T) * (1.0 - h1 * h1)
    gW1 = X.T @ d1
    gb1 = d1.sum(axis=0)
    return loss, [gW1, gb1, gW2, gb2, gW3, gb3]


@dataclass
class AnnModel:
    config: AnnConfig
    classes: tuple
    params: list
    n_features: int
    losses: list = field(default_factory=list)

    def proba(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return forward(self.params, X)[2]

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.classes)[np.argmax(self.proba(X), axis=1)]


def ann_train(X, y, cfg: AnnConfig = AnnConfig()) -> AnnModel:
    """Train in -> tau -> tau -> classes with mini-batch momentum SGD.

    Batches are reshuffled every epoch from a generator seeded by
    ``cfg.seed``; ``losses`` records the full-set loss after each epoch.

    Raises:
        SingleClassInput: fewer than two classes.
        NonFiniteFeature: NaN or inf in ``X``.
    """
    X = _check_X(X)
    y = np.asarray(y)
    classes = tuple(sorted(int(c) for c in np.unique(y)))
    if len(classes) < 2:
        raise SingleClassInput("ANN training needs at least two classes")
    Y = (y[:, None] == np.asarray(classes)[None, :]).astype(float)
    init_rng = substream(cfg.seed, "ann", "init")
    order_rng = substream(cfg.seed, "ann", "batches")
    params = init_params(X.shape[1], cfg.tau, len(classes), init_rng)
    vel = [np.zeros_like(p) for p in params]
    losses = []
    n = len(X)
    for _ in range(cfg.epochs):
        perm = order_rng.permutation(n)
        for s in range(0, n, cfg.batch):
            b = perm[s:s + cfg.batch]
            _, grads = loss_and_grad(params, X[b], Y[b])
            for k in range(len(params)):
                vel[k] = cfg.momentum * vel[k] - cfg.lr * grads[k]
                params[k] = params[k] + vel[k]
        losses.append(cross_entropy(params, X, Y))
    return AnnModel(cfg, classes, params, X.shape[1], losses)


def ann_predict(model: AnnModel, X) -> np.ndarray:
    return model.predict(X)
