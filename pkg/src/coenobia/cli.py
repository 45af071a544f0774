"""Command-line front end: ``coenobia <subcommand> [flags]``.

Settings resolve in increasing precedence: built-in defaults, the
``--config`` file, the ``--model-config`` file (``evaluate`` only), then
command-line flags.  Exit codes: 0 success, 1 configuration or usage
error, 2 data or I/O error, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import pipeline as pl
from .classify import grid_search, load_model, save_model, train_model
from .config import DEFAULTS, PipelineConfig, read_config_file
from .errors import ConfigError, DataError, IoFailure
from .evaluate import kfold_cv
from .features import read_features, write_features
from .select import SfsRanking, choose_l
from .synth import generate_dataset

log = logging.getLogger("coenobia")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the configuration-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _default(key: str) -> str:
    v = DEFAULTS[key]
    if isinstance(v, tuple):
        v = ",".join(str(x) for x in v)
    elif isinstance(v, bool):
        v = "on" if v else "off"
    return f"(default: {v}; config key {key})"


def _flag(p, flag: str, key: str, help: str, **kw):
    p.add_argument(flag, dest=key, default=argparse.SUPPRESS, help=f"{help} {_default(key)}", **kw)


def _switch(p, flag: str, key: str, value: bool, help: str):
    p.add_argument(flag, dest=key, action="store_const", const=value, default=argparse.SUPPRESS,
                   help=f"{help}; sets {key} = {'true' if value else 'false'} {_default(key)}")


def _common(p):
    p.add_argument("--config", metavar="FILE", help="flat key = value settings file (default: none)")
    _flag(p, "--seed", "seed", "master random seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr (default: off)")


def _segment_flags(p):
    g = p.add_argument_group("segmentation")
    _flag(g, "--min-area", "candidates.min_area", "smallest candidate area in px", type=int)
    _flag(g, "--max-area", "candidates.max_area", "largest candidate area in px", type=int)
    _switch(g, "--no-child-rule", "candidates.require_child", False,
            "keep candidates without an inner contour")
    _switch(g, "--no-align", "segment.align", False, "skip orientation normalization")
    g.add_argument("--clahe-tiles", dest="_clahe_tiles", metavar="X,Y", default=argparse.SUPPRESS,
                   help="CLAHE tile grid (default: 8,8; config keys clahe.tiles_x, clahe.tiles_y)")
    _flag(g, "--clahe-clip", "clahe.clip_limit", "CLAHE clip limit", type=float)
    _switch(g, "--no-clahe", "clahe.enabled", False, "posterize the raw frame")
    _flag(g, "--levels", "posterize.levels", "posterization levels n_L", type=int)
    _flag(g, "--tolerance", "hoover.tolerance", "Hoover tolerance for summary figures", type=float)


def _classifier_flags(p, kind_flag: str = "--classifier"):
    g = p.add_argument_group("classifier")
    _flag(g, kind_flag, "classifier.kind", "classifier family", choices=("svm", "ann"))
    _flag(g, "--kernel", "svm.kernel", "SVM kernel", choices=("linear", "rbf"))
    _flag(g, "--C", "svm.C", "SVM complexity", type=float)
    _flag(g, "--gamma", "svm.gamma", "RBF bandwidth", type=float)
    _flag(g, "--tau", "ann.tau", "ANN hidden-layer parameter (2*tau units)", type=int)
    _flag(g, "--epochs", "ann.epochs", "ANN training epochs", type=int)
    _switch(g, "--grid", "cv.grid", True, "grid-search hyperparameters by cross-validation")
    _switch(g, "--no-grid", "cv.grid", False, "train with the given hyperparameters")
    _flag(g, "--k", "cv.folds", "cross-validation folds", type=int)


def _sfs_flags(p, with_switch: bool = True):
    g = p.add_argument_group("feature selection")
    if with_switch:
        _switch(g, "--sfs", "sfs.enabled", True, "run sequential forward selection")
    _flag(g, "--criterion", "sfs.criterion", "classifier scoring each subset", choices=("svm", "ann"))
    _flag(g, "--criterion-kernel", "sfs.kernel", "criterion SVM kernel", choices=("linear", "rbf"))
    _flag(g, "--sfs-folds", "sfs.folds", "folds inside the selection criterion", type=int)
    _flag(g, "--sfs-max", "sfs.max_features", "stop the ranking after this many features (0 = all)",
          type=int)


def _synth_flags(p):
    g = p.add_argument_group("synthetic frames")
    _flag(g, "--noise", "synth.noise_sigma", "Gaussian noise sigma", type=float)
    _switch(g, "--grid-lines", "synth.grid_lines", True, "draw counting-chamber grid lines")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="coenobia", description=__doc__, formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"coenobia {__version__}",
                        help="print the version and exit (default: off)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("synth", help="write a synthetic labeled corpus")
    _common(p)
    p.add_argument("--per-class", type=int, required=True, help="frames per coenobium class")
    p.add_argument("--out", required=True, help="output folder")
    _synth_flags(p)

    p = sub.add_parser("segment", help="cut and refine algae from manifest frames")
    _common(p)
    p.add_argument("--in", dest="manifest", required=True, help="manifest CSV (path,label)")
    p.add_argument("--out", required=True, help="patch folder")
    _segment_flags(p)

    p = sub.add_parser("features", help="extract the 215 descriptors of a patch folder")
    _common(p)
    p.add_argument("--patches", required=True, help="patch folder written by segment")
    p.add_argument("--out", required=True, help="features CSV")

    p = sub.add_parser("select", help="rank features by sequential forward selection")
    _common(p)
    p.add_argument("--features", required=True, help="labeled features CSV")
    p.add_argument("--out", required=True, help="ranking JSON")
    _sfs_flags(p, with_switch=False)

    p = sub.add_parser("train", help="fit the standardizer and classifier")
    _common(p)
    p.add_argument("--features", required=True, help="labeled features CSV")
    p.add_argument("--ranking", help="ranking JSON; keeps its chosen prefix (default: all features)")
    p.add_argument("--out", required=True, help="model file")
    _classifier_flags(p, kind_flag="--model")

    p = sub.add_parser("evaluate", help="stratified k-fold cross-validation report")
    _common(p)
    p.add_argument("--features", required=True, help="labeled features CSV")
    p.add_argument("--model-config", metavar="FILE", help="classifier settings file, overrides --config (default: none)")
    p.add_argument("--ranking", help="ranking JSON (default: all features)")
    p.add_argument("--out", default="report.json", help="report JSON (default: report.json)")
    _classifier_flags(p)

    p = sub.add_parser("pipeline", help="synth or manifest through to a cross-validated report")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--synth", type=int, metavar="N", help="generate N frames per class (this or --in is required)")
    src.add_argument("--in", dest="manifest",
                     help="manifest CSV (path,label) (this or --synth is required)")
    p.add_argument("--out", default="run", help="output folder (default: run)")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures (default: off)")
    _segment_flags(p)
    _classifier_flags(p)
    _sfs_flags(p)
    _synth_flags(p)

    p = sub.add_parser("timing", help="per-alga wall time of segment, extract and predict")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--synth", type=int, metavar="N", help="generate N frames per class (this or --in is required)")
    src.add_argument("--in", dest="manifest",
                     help="manifest CSV (path,label) (this or --synth is required)")
    p.add_argument("--model", help="model file (default: train an SVM on the timed frames)")
    p.add_argument("--out", help="timing JSON (default: print only)")
    p.add_argument("--work", default="timing_corpus",
                   help="folder for generated frames (default: timing_corpus)")
    _segment_flags(p)
    for action in sub.choices.values():
        for a in action._actions:
            if a.required and "required" not in a.help:
                a.help += " (required)"
    return parser


def resolve_config(args) -> PipelineConfig:
    overrides = {}
    for path in (getattr(args, "config", None), getattr(args, "model_config", None)):
        if path:
            overrides.update(read_config_file(path))
    for key, value in vars(args).items():
        if key in DEFAULTS:
            overrides[key] = value
    tiles = getattr(args, "_clahe_tiles", None)
    if tiles is not None:
        parts = tiles.split(",")
        if len(parts) != 2:
            raise ConfigError("--clahe-tiles expects X,Y")
        overrides["clahe.tiles_x"], overrides["clahe.tiles_y"] = parts
    return PipelineConfig(overrides)


def _ranking_subset(path):
    if not path:
        return None
    import json

    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read ranking {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    ranking = SfsRanking.from_dict(d)
    return ranking.order[:choose_l(ranking)[0]]


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args, cfg):
    rows = generate_dataset(args.per_class, args.out, cfg.synth_template(), cfg.seed)
    print(f"wrote {len(rows)} frames and manifest.csv to {args.out}")


def cmd_segment(args, cfg):
    from .core import read_manifest

    frames = pl.segment_frames(read_manifest(args.manifest), cfg.segment_config())
    pl.write_patch_dir(args.out, frames)
    summary = pl.segmentation_summary(frames, cfg["hoover.tolerance"])
    if summary["frames_with_ground_truth"]:
        pl.write_hoover_csv(Path(args.out) / "hoover.csv", frames)
        pl.write_json(Path(args.out) / "segmentation.json", summary)
    print(f"{summary['patches']} patches from {summary['frames']} frames written to {args.out}")


def cmd_features(args, cfg):
    from .features import extract_all

    ids, labels, pairs = pl.read_patch_dir(args.patches)
    keep_ids, keep_labels, rows = [], [], []
    for sid, lab, pair in zip(ids, labels, pairs):
        try:
            rows.append(extract_all(pair))
        except DataError as exc:
            log.warning("%s skipped: %s", sid, exc)
            continue
        keep_ids.append(sid)
        keep_labels.append(lab)
    X = np.array(rows, dtype=float).reshape(len(rows), -1) if rows else np.zeros((0, 215))
    write_features(args.out, keep_ids, X, keep_labels)
    print(f"{len(keep_ids)} feature vectors written to {args.out}")


def cmd_select(args, cfg):
    from . import plotting

    data = read_features(args.features)
    ranking = pl.run_sfs(data, cfg.criterion_spec(), cfg.seed, int(cfg["sfs.folds"]),
                         int(cfg["sfs.max_features"]))
    out = {**ranking.as_dict(), "criterion": cfg.criterion_spec().as_dict(), "seed": cfg.seed}
    pl.write_json(args.out, out)
    plotting.plot_sfs(ranking.score_curve, ranking.std_curve, out["l"],
                      Path(args.out).with_name("sfs_curve.png"))
    print(f"chose l = {out['l']} features, criterion accuracy "
          f"{100 * out['accuracy']:.2f}% +- {100 * out['std']:.2f}%")


def cmd_train(args, cfg):
    data = read_features(args.features)
    selected = _ranking_subset(args.ranking)
    spec = cfg.classifier_spec()
    if cfg["cv.grid"]:
        spec = grid_search(data, spec, cfg.seed, int(cfg["cv.folds"]), selected).best
    model = train_model(data.X, data.y, spec, selected)
    model.meta.update({"seed": cfg.seed, "n_train": len(data)})
    save_model(args.out, model)
    print(f"trained {spec.kind} on {len(data)} samples, {len(model.selected)} features: {args.out}")


def cmd_evaluate(args, cfg):
    from . import plotting

    data = read_features(args.features)
    selected = _ranking_subset(args.ranking)
    spec = cfg.classifier_spec()
    k = int(cfg["cv.folds"])
    if cfg["cv.grid"]:
        grid = grid_search(data, spec, cfg.seed, k, selected)
        spec, cv, grid_info = grid.best, grid.report, grid.as_dict()
    else:
        cv, grid_info = kfold_cv(data, k, spec, cfg.seed, selected), None
    report = {
        "timestamp": pl._iso_now(), "seed": cfg.seed, "config": cfg.as_dict(),
        "classifier": spec.as_dict(), "grid": grid_info,
        "selected_features": None if selected is None else [int(i) for i in selected],
        "classification": cv.as_dict(), "mean_accuracy": float(cv.mean),
        "std_accuracy": float(cv.std),
    }
    pl.write_json(args.out, report)
    plotting.plot_confusion(cv.confusion_mean, cv.confusion_std,
                            Path(args.out).with_name("confusion.png"))
    print(f"{k}-fold accuracy {100 * cv.mean:.2f}% +- {100 * cv.std:.2f}%")


def cmd_pipeline(args, cfg):
    report = pl.run_pipeline(cfg, args.out, manifest=args.manifest, synth_per_class=args.synth,
                             plots=not args.no_plots)
    print(f"{cfg['cv.folds']}-fold accuracy {100 * report['mean_accuracy']:.2f}% "
          f"+- {100 * report['std_accuracy']:.2f}%; report: {Path(args.out) / 'report.json'}")


def cmd_timing(args, cfg):
    from .core import read_manifest

    if args.synth is not None:
        rows = generate_dataset(args.synth, args.work, cfg.synth_template(), cfg.seed)
    else:
        rows = read_manifest(args.manifest)
    frames = pl.segment_frames(rows, cfg.segment_config(), tolerances=())
    if args.model:
        model = load_model(args.model)
    else:
        ids, X, labels, _, _ = pl.extract_frames(frames)
        data = pl.labeled_subset(ids, X, labels)
        model = train_model(data.X, data.y, cfg.classifier_spec())
    result = pl.time_per_alga(frames, model)
    if args.out:
        pl.write_json(args.out, result)
    print(f"per-alga time {result['mean_seconds']:.4f} +- {result['std_seconds']:.4f} s "
          f"over {result['patches']} patches")


COMMANDS = {"synth": cmd_synth, "segment": cmd_segment, "features": cmd_features,
            "select": cmd_select, "train": cmd_train, "evaluate": cmd_evaluate,
            "pipeline": cmd_pipeline, "timing": cmd_timing}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"coenobia: config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"coenobia: data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"coenobia: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
