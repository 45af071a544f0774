"""Stage orchestration shared by the command-line front end and the tests."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .classify import ClassifierSpec, grid_search, save_model, train_model
from .core import (CLASSES, LabeledDataset, ManifestRow, RegionPatch, image_to_mask, load_image,
                   mask_to_image, read_manifest, save_image)
from .errors import DataError, IoFailure, TooFewSamples
from .evaluate import (DEFAULT_TOLERANCES, HOOVER_CATEGORIES, PRF, HooverCurves, hoover_curves,
                       kfold_cv, mean_curves, pixel_prf)
from .features import N_FEATURES, Standardizer, extract_all, write_features
from .segment import SegmentConfig, patch_frame_mask, segment_image
from .select import SfsRanking, choose_l, sfs_rank
from .synth import generate_dataset, gt_path_for

log = logging.getLogger(__name__)

SCREEN_REASONS = ("size", "no_child")
PATCH_COLUMNS = ("sample_id", "source", "label", "offset_x", "offset_y", "crop_h", "crop_w",
                 "angle", "low_confidence", "area", "image", "mask", "drop_reason")


# ---------------------------------------------------------------------------
# segmentation over a manifest

@dataclass
class FrameResult:
    source: str
    label: int | None
    shape: tuple
    patches: list = field(default_factory=list)
    drops: list = field(default_factory=list)   # (region index, reason)
    hoover: HooverCurves | None = None
    prf: PRF | None = None
    seconds: float = 0.0

    def screen_drops(self) -> Counter:
        return Counter(r for _, r in self.drops if r in SCREEN_REASONS)


def _label_map(masks, shape) -> np.ndarray:
    out = np.zeros(shape, dtype=np.int32)
    for k, m in enumerate(masks, start=1):
        out[m] = k
    return out


def segment_frame(row: ManifestRow, cfg: SegmentConfig, tolerances=DEFAULT_TOLERANCES) -> FrameResult:
    """Segment one manifest frame and score it against ``gt_*`` when that file exists."""
    try:
        img = load_image(row.path)
    except OSError as exc:
        raise IoFailure(f"cannot read image {row.path}: {exc}") from exc
    source = Path(row.path).stem
    t0 = time.perf_counter()
    res = segment_image(img, cfg, source_id=source)
    seconds = time.perf_counter() - t0
    fr = FrameResult(source, row.label, img.shape, res.patches, list(res.drops), seconds=seconds)
    gt_path = gt_path_for(row.path)
    if gt_path.exists() and gt_path != Path(row.path):
        gt = image_to_mask(load_image(gt_path))
        masks = [patch_frame_mask(p, img.shape) for p in res.patches]
        ms = _label_map(masks, img.shape)
        gt_labels, _ = ndimage.label(gt, structure=np.ones((3, 3)))
        fr.hoover = hoover_curves(gt_labels, ms, tolerances)
        fr.prf = pixel_prf(gt, ms > 0)
    return fr


def segment_frames(rows, cfg: SegmentConfig, tolerances=DEFAULT_TOLERANCES) -> list[FrameResult]:
    return [segment_frame(r, cfg, tolerances) for r in rows]


def segmentation_summary(frames, tolerance: float) -> dict:
    """Patch and drop tallies plus Hoover and pixel scores over frames with ground truth."""
    drops = Counter()
    for fr in frames:
        drops.update(r for _, r in fr.drops)
    out = {
        "frames": len(frames),
        "patches": int(sum(len(fr.patches) for fr in frames)),
        "drops": dict(sorted(drops.items())),
        "frames_with_ground_truth": 0,
    }
    scored = [fr for fr in frames if fr.hoover is not None]
    if not scored:
        return out
    pooled = HooverCurves.pool(fr.hoover for fr in scored)
    per_image = mean_curves(fr.hoover for fr in scored)
    k = int(np.argmin(np.abs(pooled.tolerances - tolerance)))
    prf = np.array([[fr.prf.precision, fr.prf.recall, fr.prf.f_measure] for fr in scored])
    ddof = 1 if len(scored) > 1 else 0
    out.update({
        "frames_with_ground_truth": len(scored),
        "tolerance": float(pooled.tolerances[k]),
        "hoover_pooled": pooled.at(tolerance),
        "hoover_per_image_mean": {c: float(per_image[c][k]) for c in HOOVER_CATEGORIES},
        "pixel_mean": {"precision": float(prf[:, 0].mean()), "recall": float(prf[:, 1].mean()),
                       "f_measure": float(prf[:, 2].mean())},
        "pixel_std": {"precision": float(prf[:, 0].std(ddof=ddof)), "recall": float(prf[:, 1].std(ddof=ddof)),
                      "f_measure": float(prf[:, 2].std(ddof=ddof))},
        "pixel_undefined_frames": int(sum(fr.prf.undefined for fr in scored)),
    })
    return out


def hoover_table(frames):
    """``(tolerances, pooled fractions, per-image mean fractions)`` or ``None``."""
    scored = [fr.hoover for fr in frames if fr.hoover is not None]
    if not scored:
        return None
    pooled = HooverCurves.pool(scored)
    return pooled.tolerances, {c: pooled.fraction(c) for c in HOOVER_CATEGORIES}, mean_curves(scored)


def write_hoover_csv(path, frames) -> None:
    table = hoover_table(frames)
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tolerance", *HOOVER_CATEGORIES])
    if table is not None:
        tol, pooled, _ = table
        for k, t in enumerate(tol):
            w.writerow([f"{t:.2f}", *[repr(float(pooled[c][k])) for c in HOOVER_CATEGORIES]])
    _write_text(path, buf.getvalue())


# ---------------------------------------------------------------------------
# patch files

def _write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _patch_row(p: RegionPatch, label, image_name="", mask_name="", reason=""):
    return [p.sample_id, p.source_id, "" if label is None else label, p.offset[0], p.offset[1],
            p.crop_shape[0], p.crop_shape[1], repr(float(p.orientation_deg)),
            int(p.low_confidence), p.area, image_name, mask_name, reason]


def write_patch_dir(out_dir, frames, failures=None) -> None:
    """Crop/mask PGM pairs, ``patches.csv`` and ``drops.csv`` (screening tallies)."""
    out_dir = Path(out_dir)
    failures = failures or {}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_dir}: {exc}") from exc
    pbuf = io.StringIO(newline="")
    pw = csv.writer(pbuf, lineterminator="\n")
    pw.writerow(PATCH_COLUMNS)
    dbuf = io.StringIO(newline="")
    dw = csv.writer(dbuf, lineterminator="\n")
    dw.writerow(["source", "reason", "count"])
    for fr in frames:
        for p in fr.patches:
            stem = f"{p.source_id}_{p.index}"
            save_image(out_dir / f"{stem}.pgm", p.image)
            save_image(out_dir / f"{stem}_mask.pgm", mask_to_image(p.mask))
            pw.writerow(_patch_row(p, fr.label, f"{stem}.pgm", f"{stem}_mask.pgm",
                                   failures.get(p.sample_id, "")))
        for k, reason in fr.drops:
            if reason not in SCREEN_REASONS:
                pw.writerow([f"{fr.source}#{k}", fr.source, "" if fr.label is None else fr.label,
                             *[""] * 9, reason])
        for reason, n in sorted(fr.screen_drops().items()):
            dw.writerow([fr.source, reason, n])
    _write_text(out_dir / "patches.csv", pbuf.getvalue())
    _write_text(out_dir / "drops.csv", dbuf.getvalue())


def read_patch_dir(patch_dir):
    """``(sample_ids, labels, (image, mask) pairs)`` for the kept patches of a patch folder."""
    from .core import check_label
    from .errors import MalformedRow

    patch_dir = Path(patch_dir)
    table = patch_dir / "patches.csv"
    try:
        rows = list(csv.DictReader(io.StringIO(table.read_text(encoding="utf-8"), newline="")))
    except OSError as exc:
        raise IoFailure(f"cannot read {table}: {exc}") from exc
    ids, labels, pairs = [], [], []
    for lineno, row in enumerate(rows, start=2):
        if None in row or any(c not in row for c in PATCH_COLUMNS):
            raise MalformedRow(f"{table}:{lineno}: unexpected columns")
        if row["drop_reason"] or not row["image"]:
            continue
        try:
            img = load_image(patch_dir / row["image"])
            mask = image_to_mask(load_image(patch_dir / row["mask"]))
        except OSError as exc:
            raise IoFailure(f"cannot read patch files for {row['sample_id']}: {exc}") from exc
        ids.append(row["sample_id"])
        labels.append(check_label(row["label"]))
        pairs.append((img, mask))
    return ids, labels, pairs


# ---------------------------------------------------------------------------
# features

def extract_frames(frames):
    """``(ids, X, labels, sources, failures)``; descriptor failures drop the patch."""
    ids, rows, labels, sources = [], [], [], []
    failures = {}
    for fr in frames:
        for p in fr.patches:
            try:
                rows.append(extract_all(p))
            except DataError as exc:
                log.info("%s dropped: %s", p.sample_id, exc)
                failures[p.sample_id] = f"descriptor:{getattr(exc, 'block', 'unknown')}"
                continue
            ids.append(p.sample_id)
            labels.append(fr.label)
            sources.append(fr.source)
    X = np.array(rows, dtype=float).reshape(-1, N_FEATURES)
    return ids, X, labels, sources, failures


def labeled_subset(ids, X, labels, provenance="") -> LabeledDataset:
    keep = [i for i, lab in enumerate(labels) if lab is not None]
    return LabeledDataset([ids[i] for i in keep], X[keep], np.array([labels[i] for i in keep], int),
                          provenance)


# ---------------------------------------------------------------------------
# selection and training

def run_sfs(data: LabeledDataset, criterion: ClassifierSpec, seed: int, k: int,
            max_features: int = 0) -> SfsRanking:
    """Forward ranking on globally standardized features."""
    Z = Standardizer.fit(data.X).apply(data.X)
    std_data = LabeledDataset(data.ids, Z, data.y, data.provenance)
    return sfs_rank(std_data, criterion, seed=seed, k=k, max_features=max_features or None)


def write_json(path, obj) -> None:
    _write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_counts(path, frames, predictions: dict) -> None:
    """Per-frame tally of predicted coenobium classes."""
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "label", *[f"n_{c}" for c in CLASSES], "total"])
    for fr in frames:
        tally = Counter(predictions[p.sample_id] for p in fr.patches if p.sample_id in predictions)
        counts = [tally.get(c, 0) for c in CLASSES]
        w.writerow([fr.source, "" if fr.label is None else fr.label, *counts, sum(counts)])
    _write_text(path, buf.getvalue())


def _iso_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def run_pipeline(cfg, out_dir, manifest=None, synth_per_class=None, plots: bool = True) -> dict:
    """Ingest, segment, extract, optionally select, grid-search, cross-validate and report.

    Exactly one of ``manifest`` and ``synth_per_class`` is given.  All files
    land in ``out_dir``; the returned dict is what ``report.json`` holds.

    Raises:
        DataError: unreadable inputs or too few labeled patches to evaluate.
        ConfigError: inconsistent settings.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_dir}: {exc}") from exc
    seed = cfg.seed
    if synth_per_class is not None:
        rows = generate_dataset(int(synth_per_class), out_dir / "corpus", cfg.synth_template(), seed)
        source = {"synthetic_per_class": int(synth_per_class), "manifest": None}
    else:
        rows = read_manifest(manifest)
        source = {"synthetic_per_class": None, "manifest": Path(manifest).name}
    if not rows:
        raise TooFewSamples("the manifest lists no frames")

    frames = segment_frames(rows, cfg.segment_config())
    ids, X, labels, sources, failures = extract_frames(frames)
    seg = segmentation_summary(frames, cfg["hoover.tolerance"])
    seg["descriptor_failures"] = len(failures)
    write_hoover_csv(out_dir / "hoover.csv", frames)
    write_features(out_dir / "features.csv", ids, X, labels)

    data = labeled_subset(ids, X, labels, provenance=json.dumps(source, sort_keys=True))
    k = int(cfg["cv.folds"])
    ranking = None
    selected = None
    selection = None
    if cfg["sfs.enabled"]:
        ranking = run_sfs(data, cfg.criterion_spec(), seed, int(cfg["sfs.folds"]),
                          int(cfg["sfs.max_features"]))
        l, _, _ = choose_l(ranking)
        selected = ranking.order[:l]
        selection = {**ranking.as_dict(), "criterion": cfg.criterion_spec().as_dict()}
        write_json(out_dir / "ranking.json", selection)

    spec = cfg.classifier_spec()
    if cfg["cv.grid"]:
        grid = grid_search(data, spec, seed, k, selected)
        best, cv = grid.best, grid.report
        grid_info = grid.as_dict()
    else:
        best, cv = spec, kfold_cv(data, k, spec, seed, selected)
        grid_info = None

    model = train_model(data.X, data.y, best, selected)
    model.meta.update({"seed": seed, "n_train": len(data)})
    save_model(out_dir / "model.bin", model)

    predictions = {sid: int(p) for sid, p in zip(data.ids, cv.predictions)}
    unlabeled = [i for i, lab in enumerate(labels) if lab is None]
    if unlabeled:
        pred = model.predict(X[unlabeled])
        predictions.update({ids[i]: int(p) for i, p in zip(unlabeled, pred)})
    write_counts(out_dir / "counts.csv", frames, predictions)
    write_patch_dir(out_dir / "patches", frames, failures)

    report = {
        "timestamp": _iso_now(),
        "seed": seed,
        "config": cfg.as_dict(),
        "input": {**source, "frames": len(rows)},
        "segmentation": seg,
        "features": {"samples": len(ids), "labeled": len(data),
                     "per_class": {str(c): int(np.sum(data.y == c)) for c in CLASSES}},
        "selection": selection,
        "grid": grid_info,
        "classifier": best.as_dict(),
        "selected_features": None if selected is None else [int(i) for i in selected],
        "classification": cv.as_dict(),
        "mean_accuracy": float(cv.mean),
        "std_accuracy": float(cv.std),
    }
    write_json(out_dir / "report.json", report)
    if plots:
        render_plots(out_dir, frames, cv, ranking)
    return report


def render_plots(out_dir, frames, cv=None, ranking=None) -> None:
    from . import plotting

    out_dir = Path(out_dir)
    table = hoover_table(frames)
    if table is not None:
        tol, pooled, _ = table
        plotting.plot_hoover(tol, pooled, out_dir / "hoover.png")
    if cv is not None:
        plotting.plot_confusion(cv.confusion_mean, cv.confusion_std, out_dir / "confusion.png")
    if ranking is not None:
        plotting.plot_sfs(ranking.score_curve, ranking.std_curve, choose_l(ranking)[0],
                          out_dir / "sfs_curve.png")


# ---------------------------------------------------------------------------
# timing

MIN_TIMED_PATCHES = 30


def time_per_alga(frames, model) -> dict:
    """Per-alga wall time: frame segmentation shared over its patches, plus extract and predict.

    Raises:
        TooFewPatches: fewer than 30 patches were timed.
    """
    from .errors import TooFewPatches

    times = []
    for fr in frames:
        if not fr.patches:
            continue
        share = fr.seconds / len(fr.patches)
        for p in fr.patches:
            t0 = time.perf_counter()
            try:
                x = extract_all(p)
            except DataError:
                continue
            model.predict(x)
            times.append(share + time.perf_counter() - t0)
    if len(times) < MIN_TIMED_PATCHES:
        raise TooFewPatches(f"only {len(times)} patches timed; need at least {MIN_TIMED_PATCHES}")
    t = np.array(times)
    return {"patches": len(t), "mean_seconds": float(t.mean()), "std_seconds": float(t.std(ddof=1)),
            "max_seconds": float(t.max())}
