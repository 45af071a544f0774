"""Trained model bundle (standardizer + feature subset + classifier) and its binary file."""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigOutOfRange, CorruptHeader, DimensionMismatch, IoFailure
from ..features import Standardizer
from .ann import AnnConfig, AnnModel, ann_train
from .svm import BinarySvm, SvmConfig, SvmModel, svm_train

MAGIC = b"CNSC"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ClassifierSpec:
    """Which classifier to train and with what settings."""

    kind: str = "svm"
    svm: SvmConfig = SvmConfig()
    ann: AnnConfig = AnnConfig()

    def __post_init__(self):
        if self.kind not in ("svm", "ann"):
            raise ConfigOutOfRange(f"unknown classifier {self.kind!r}")

    def as_dict(self) -> dict:
        inner = self.svm if self.kind == "svm" else self.ann
        return {"kind": self.kind, **dataclasses.asdict(inner)}


def fit_classifier(X, y, spec: ClassifierSpec):
    if spec.kind == "svm":
        return svm_train(X, y, spec.svm)
    return ann_train(X, y, spec.ann)


@dataclass
class TrainedModel:
    kind: str
    standardizer: Standardizer
    selected: np.ndarray
    classifier: object
    format_version: int = FORMAT_VERSION
    meta: dict = field(default_factory=dict)

    @property
    def n_inputs(self) -> int:
        return len(self.standardizer.mean)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_inputs:
            raise DimensionMismatch(f"model expects {self.n_inputs} features, got {X.shape[1]}")
        return self.standardizer.apply(X)[:, self.selected]

    def predict(self, X) -> np.ndarray:
        return self.classifier.predict(self.transform(X))


def train_model(X, y, spec: ClassifierSpec = ClassifierSpec(), selected=None) -> TrainedModel:
    """Standardize on ``X``, keep the ``selected`` columns, fit the classifier."""
    X = np.asarray(X, dtype=float)
    std = Standardizer.fit(X)
    sel = np.arange(X.shape[1]) if selected is None else np.asarray(selected, dtype=np.int64)
    clf = fit_classifier(std.apply(X)[:, sel], y, spec)
    return TrainedModel(spec.kind, std, sel, clf, meta={"classifier": spec.as_dict()})


# ---------------------------------------------------------------------------
# binary format: little-endian; magic, u16 version, then tagged sections
# (4-byte tag, u32 byte length, payload)

def _f8(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<I", len(payload)) + payload


def _svm_payload(m: SvmModel) -> bytes:
    out = [struct.pack("<II", m.n_features, len(m.machines))]
    for mach in m.machines:
        nsv = len(mach.coef)
        out.append(struct.pack("<BBdI", mach.pos_label, mach.neg_label, mach.rho, nsv))
        out.append(_f8(mach.support.reshape(nsv, m.n_features)))
        out.append(_f8(mach.coef))
    return b"".join(out)


def _ann_payload(m: AnnModel) -> bytes:
    out = [struct.pack("<I", len(m.params) // 2)]
    for W, b in zip(m.params[0::2], m.params[1::2]):
        out.append(struct.pack("<II", *W.shape))
        out.append(_f8(W))
        out.append(_f8(b))
    return b"".join(out)


def encode_model(model: TrainedModel) -> bytes:
    clf = model.classifier
    cfg = clf.config
    meta = {"kind": model.kind, "classes": list(clf.classes),
            "config": dataclasses.asdict(cfg), **{k: v for k, v in model.meta.items()
                                                   if k not in ("kind", "classes", "config")}}
    d = model.n_inputs
    parts = [
        MAGIC, struct.pack("<H", model.format_version),
        _section(b"META", json.dumps(meta, sort_keys=True).encode("utf-8")),
        _section(b"STDZ", struct.pack("<I", d) + _f8(model.standardizer.mean)
                 + _f8(model.standardizer.std)),
        _section(b"SELI", struct.pack("<I", len(model.selected))
                 + np.asarray(model.selected, dtype="<u4").tobytes()),
    ]
    if model.kind == "svm":
        parts.append(_section(b"SVMP", _svm_payload(clf)))
    else:
        parts.append(_section(b"ANNP", _ann_payload(clf)))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptHeader("model file is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def f8(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(float)


def decode_model(buf: bytes) -> TrainedModel:
    """Inverse of :func:`encode_model`.

    Raises:
        CorruptHeader: bad magic, unknown version, truncated or inconsistent data.
    """
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise CorruptHeader("not a model file (bad magic)")
    (version,) = r.unpack("<H")
    if version != FORMAT_VERSION:
        raise CorruptHeader(f"unsupported model format version {version}")
    sections = {}
    while r.pos < len(buf):
        tag = r.take(4)
        (length,) = r.unpack("<I")
        sections[tag] = r.take(length)
    try:
        meta = json.loads(sections[b"META"].decode("utf-8"))
        s = _Reader(sections[b"STDZ"])
        (d,) = s.unpack("<I")
        std = Standardizer(s.f8(d), s.f8(d))
        s = _Reader(sections[b"SELI"])
        (m,) = s.unpack("<I")
        selected = np.frombuffer(s.take(4 * m), dtype="<u4").astype(np.int64)
        classes = tuple(meta["classes"])
        if meta["kind"] == "svm":
            cfg = SvmConfig(**meta["config"])
            s = _Reader(sections[b"SVMP"])
            nf, npairs = s.unpack("<II")
            clf = SvmModel(cfg, classes, n_features=nf)
            for _ in range(npairs):
                a, b, rho, nsv = s.unpack("<BBdI")
                sv = s.f8(nsv * nf).reshape(nsv, nf)
                clf.machines.append(BinarySvm(a, b, sv, s.f8(nsv), rho))
        else:
            cfg = AnnConfig(**meta["config"])
            s = _Reader(sections[b"ANNP"])
            (nl,) = s.unpack("<I")
            params = []
            for _ in range(nl):
                rows, cols = s.unpack("<II")
                params += [s.f8(rows * cols).reshape(rows, cols), s.f8(cols)]
            clf = AnnModel(cfg, classes, params, params[0].shape[0])
    except (KeyError, TypeError, ValueError, UnicodeDecodeError) as exc:
        raise CorruptHeader(f"model file is inconsistent: {exc}") from exc
    if np.any(selected >= d):
        raise CorruptHeader("selected feature index out of range")
    extra = {k: v for k, v in meta.items() if k not in ("kind", "classes", "config")}
    return TrainedModel(meta["kind"], std, selected, clf, version, extra)


def save_model(path, model: TrainedModel) -> None:
    try:
        Path(path).write_bytes(encode_model(model))
    except OSError as exc:
        raise IoFailure(f"cannot write model {path}: {exc}") from exc


def load_model(path) -> TrainedModel:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read model {path}: {exc}") from exc
    return decode_model(buf)
