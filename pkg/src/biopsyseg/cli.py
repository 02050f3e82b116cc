"""Command-line entry point: ``biopsyseg <subcommand> [options]``.

Exit codes: 0 success, 1 user error, 2 internal error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, NumericalError

log = logging.getLogger("biopsyseg")

EXIT_OK, EXIT_USER, EXIT_INTERNAL, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse that reports bad usage in one line with the user-error exit code."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def add_dataclass_flags(parser, cls, group_title: str, skip=()) -> None:
    """One string flag per dataclass field; values are coerced like config-file values."""
    group = parser.add_argument_group(group_title)
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        default = f.default if f.default is not dataclasses.MISSING else None
        group.add_argument(_flag(f.name), dest=f"{cls.__name__}.{f.name}", metavar="V", help=f"default {default}")


def dataclass_overrides(args, cls) -> dict:
    from .netgraph.config import coerce_value

    out = {}
    for f in dataclasses.fields(cls):
        raw = getattr(args, f"{cls.__name__}.{f.name}", None)
        if raw is not None:
            out[f.name] = coerce_value(f.default, raw, f.name)
    return out


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"file not found: {p}")
    return p


def _header(args) -> str:
    return f"# biopsyseg {__version__} {args.command} seed={args.seed}\n"


# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    from .imageio import write_png
    from .synth import synth_dataset

    out = _out_dir(args.out)
    data = synth_dataset(args.num_images, args.size, args.num_classes, args.seed)
    for i, (img, mask) in enumerate(data):
        write_png(out / f"image_{i:04d}.png", img)
        write_png(out / f"mask_{i:04d}.png", mask)
    (out / "README.txt").write_text(
        _header(args) + f"{args.num_images} images of {args.size}x{args.size}, {args.num_classes} classes\n"
    )
    print(f"wrote {len(data)} image/mask pairs to {out}")
    return EXIT_OK


def cmd_tile(args) -> int:
    from .imageio import read_mask, read_rgb, write_png
    from .tiling import PatchGrid, extract_patches, make_context

    image = read_rgb(args.image)
    mask = read_mask(args.mask) if args.mask else None
    out = _out_dir(args.out)
    stride = None if args.overlap is None else args.patch - args.overlap
    grid = PatchGrid(image.shape[0], image.shape[1], patch=args.patch, stride=stride, border=args.border)
    grid, stream = extract_patches(image, mask, grid)
    for i, ip, mp in stream:
        write_png(out / f"patch_{i:04d}.png", ip)
        if mp is not None:
            write_png(out / f"mask_{i:04d}.png", mp)
        if args.context:
            write_png(out / f"context_{i:04d}.png", make_context(image, grid, i).context)
    (out / "manifest.tsv").write_text(_header(args) + grid.manifest())
    print(f"{len(grid)} patches ({grid.shape[0]}x{grid.shape[1]} grid) written to {out}")
    return EXIT_OK


def _model_config(args):
    from .netgraph.config import ModelConfig, preset

    over = dataclass_overrides(args, ModelConfig)
    if args.config:
        base = ModelConfig.load(_require_file(args.config))
        return base.replace(**over) if over else base
    return preset(args.preset, multi=args.multi, **over)


def cmd_train(args) -> int:
    from . import plots
    from .imageio import load_pairs
    from .netgraph import build_model, count_params
    from .netgraph.config import ModelConfig, parse_kv, _coerce
    from .trainer import AugmentationSpec, TrainConfig, roi_samples, split_train_val, train

    cfg = _model_config(args)
    raw = _coerce(TrainConfig, parse_kv(_require_file(args.train_config).read_text())) if args.train_config else {}
    raw.update(dataclass_overrides(args, TrainConfig))
    raw.setdefault("seed", args.seed)
    tcfg = TrainConfig(**raw)
    pairs = load_pairs(args.data)
    tr_idx, va_idx = split_train_val(len(pairs), tcfg.validation_fraction, tcfg.seed)
    aug = AugmentationSpec(multiplicity=args.augment) if args.augment > 0 else None
    geom = dict(resolutions=cfg.resolutions, patch=cfg.patch_size, border=cfg.context_border)
    train_samples = roi_samples([pairs[i] for i in tr_idx], augmentation=aug, seed=tcfg.seed, **geom)
    val_samples = roi_samples([pairs[i] for i in va_idx], **geom)
    out = _out_dir(args.out)
    cfg.save(out / "model.cfg")
    (out / "train.cfg").write_text(
        "".join(f"{f.name} = {getattr(tcfg, f.name)}\n" for f in dataclasses.fields(TrainConfig))
    )
    graph = build_model(cfg, seed=tcfg.seed)
    log_path = out / "train.log"
    log_path.unlink(missing_ok=True)
    print(f"model: {count_params(graph)} parameters; {len(train_samples)} train / {len(val_samples)} val samples")
    result = train(graph, train_samples, tcfg, val_samples, log_path=log_path, checkpoint_path=out / "checkpoint.wsg")
    plots.loss_curve(result.losses, result.validations, out / "loss.png")
    if result.validations:
        step, pa, miou, f1 = max(result.validations, key=lambda v: v[2])
        print(f"best step {step}: val PA {pa:.3f} mIOU {miou:.3f} F1 {f1:.3f}")
    print(f"checkpoint, log and loss curve written to {out}")
    return EXIT_OK


def _load_graph(args):
    from .netgraph import build_model
    from .netgraph.config import ModelConfig

    ckpt = _require_file(args.checkpoint)
    cfg_path = Path(args.config) if args.config else ckpt.parent / "model.cfg"
    cfg = ModelConfig.load(_require_file(cfg_path))
    graph = build_model(cfg, seed=args.seed)
    graph.load(ckpt)
    return graph.eval()


def cmd_predict(args) -> int:
    from . import plots
    from .imageio import read_rgb, write_png
    from .segment import segment_roi

    graph = _load_graph(args)
    image = read_rgb(args.image)
    mask, _ = segment_roi(graph, image, args.batch_size)
    out = _out_dir(args.out)
    stem = Path(args.image).stem
    write_png(out / f"{stem}_mask.png", mask)
    plots.overlay(image, mask, out / f"{stem}_overlay.png")
    print(f"{mask.shape[0]}x{mask.shape[1]} mask and overlay written to {out}")
    return EXIT_OK


def _mask_list(path) -> list:
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*.png"))
        if not files:
            raise DataError(f"no PNG masks in {p}")
        return files
    return [_require_file(p)]


def cmd_eval(args) -> int:
    from . import plots
    from .imageio import read_mask
    from .metrics import ConfusionMatrix, format_table, to_csv

    preds, gts = _mask_list(args.pred), _mask_list(args.gt)
    if len(preds) != len(gts):
        raise DataError(f"{len(preds)} predictions but {len(gts)} ground-truth masks")
    cm = ConfusionMatrix(args.num_classes)
    for p, g in zip(preds, gts):
        cm.accumulate(read_mask(p), read_mask(g))
    s = cm.scores()
    print(format_table(s))
    if args.out:
        out = _out_dir(args.out)
        (out / "scores.csv").write_text(to_csv(s, header=_header(args)))
        (out / "scores.txt").write_text(_header(args) + format_table(s) + "\n")
        plots.per_class_bars(s, out / "per_class.png")
        print(f"score report written to {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import CASES, run_suite

    names = args.case or list(CASES)
    unknown = [n for n in names if n not in CASES]
    if unknown:
        raise ConfigError(f"unknown gradient case {unknown[0]!r}; see --list")
    if args.list:
        print("\n".join(CASES))
        return EXIT_OK
    failed = []

    def report(name, r):
        print(f"{name:32s} {r}")
        if not r.passed:
            failed.append(name)

    run_suite(args.seed, args.tolerance, names, report)
    print(f"{len(names) - len(failed)}/{len(names)} gradient checks passed")
    return EXIT_INTERNAL if failed else EXIT_OK


def cmd_rf(args) -> int:
    from .netgraph import build_model, receptive_field

    if args.fusion:
        h, w = receptive_field(args.fusion)
    else:
        cfg = _model_config(args)
        h, w = receptive_field(build_model(cfg, seed=args.seed))
    print(f"{h} x {w}")
    return EXIT_OK


def _baseline_config(args):
    from .classicseg import BaselineConfig

    over = dataclass_overrides(args, BaselineConfig)
    over.setdefault("seed", args.seed)
    return BaselineConfig(**over)


def cmd_baseline_train(args) -> int:
    from .classicseg import train_baseline
    from .imageio import load_pairs

    cfg = _baseline_config(args)
    model = train_baseline(load_pairs(args.data), cfg, args.num_classes)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    Path(str(out) + ".cfg").write_text(
        _header(args) + "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in dataclasses.fields(cfg))
    )
    print(f"SVM over {model.weights.shape[1] - 1} features, {len(model.classes)} classes written to {out}")
    return EXIT_OK


def cmd_baseline_predict(args) -> int:
    from . import plots
    from .classicseg import LinearSVM, predict_baseline, save_features, superpixel_features
    from .imageio import read_rgb, write_labels, write_png

    cfg = _baseline_config(args)
    model = LinearSVM.load(_require_file(args.model))
    image = read_rgb(args.image)
    mask, sp, _ = predict_baseline(image, model, cfg)
    out = _out_dir(args.out)
    stem = Path(args.image).stem
    write_png(out / f"{stem}_mask.png", mask)
    write_labels(out / f"{stem}_superpixels.png", sp.labels)
    plots.overlay(image, mask, out / f"{stem}_overlay.png")
    if args.dump_features:
        _, feats = superpixel_features(image, cfg)
        save_features(out / f"{stem}_features.bin", np.arange(len(feats)), feats, cfg.radii)
    print(f"{sp.num_superpixels} superpixels; mask, superpixel map and overlay written to {out}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    from .diagnose import cross_validate, features_for_case, read_manifest
    from .imageio import read_labels, read_mask

    from . import plots

    cases = read_manifest(args.manifest)
    feats = [features_for_case(c, read_mask, read_labels) for c in cases]
    diagnoses = [c.diagnosis for c in cases]
    lines = [_header(args)]
    first, results = True, []
    for variant in args.variant:
        x = np.array([f.vector(variant) for f in feats])
        for clf in args.classifier:
            r = cross_validate(x, diagnoses, args.task, clf, args.folds, args.repeats, args.seed, variant)
            print(f"{args.task:18s} {clf:4s} {variant:10s} mean accuracy {r.mean_accuracy:.4f}")
            lines.append(r.to_csv(header=first))
            results.append(r)
            first = False
    if args.out:
        out = Path(args.out)
        out.write_text("".join(lines))
        plots.cv_accuracy(results, out.with_suffix(".png"))
        print(f"results written to {out} and {out.with_suffix('.png')}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> Parser:
    from .classicseg import BaselineConfig
    from .netgraph.config import PRESETS, ModelConfig
    from .trainer import TrainConfig

    common = Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed, recorded in output headers (default 0)")
    common.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1, deterministic)")
    common.add_argument("--log-level", default="warning", choices=["debug", "info", "warning", "error"],
                        help="logging verbosity (default warning; debug also shows tracebacks)")

    parser = Parser(prog="biopsyseg", description="Biopsy tissue segmentation toolkit.")
    parser.add_argument("--version", action="version", version=f"biopsyseg {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=Parser)
    sub.required = True

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    def model_flags(p, skip=()):
        p.add_argument("--config", help="model config file (key = value); flags override its entries")
        p.add_argument("--preset", default="full", choices=sorted(PRESETS), help="ablation preset when no --config")
        p.add_argument("--multi", action="store_true", help="multi-resolution variant of the preset")
        add_dataclass_flags(p, ModelConfig, "model config overrides", skip=skip)

    p = add("synth", cmd_synth, "Generate the synthetic tissue dataset as PNG image/mask pairs.")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--num-images", type=int, default=250, help="number of image/mask pairs (default 250)")
    p.add_argument("--size", type=int, default=256, help="square image side in pixels (default 256)")
    p.add_argument("--num-classes", type=int, default=8, help="number of tissue labels (default 8)")

    p = add("tile", cmd_tile, "Cut an ROI into overlapping patches and write a patch manifest.")
    p.add_argument("--image", required=True, help="RGB PNG")
    p.add_argument("--mask", help="optional label mask PNG cut congruently")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--patch", type=int, default=256, help="inner patch side (default 256)")
    p.add_argument("--overlap", type=int, help="overlap between neighbors (default 56 per 256 of patch side)")
    p.add_argument("--border", type=int, default=64, help="context border around each patch (default 64)")
    p.add_argument("--context", action="store_true", help="also write context-bordered patches")

    p = add("train", cmd_train, "Train a segmentation network on a directory of image_*/mask_* PNGs.")
    p.add_argument("--data", required=True, help="directory of image_NNNN.png / mask_NNNN.png")
    p.add_argument("--out", required=True, help="output directory (checkpoint.wsg, train.log, loss.png)")
    p.add_argument("--train-config", help="training config file (key = value)")
    p.add_argument("--augment", type=int, default=0, help="augmented copies per patch (0 disables)")
    model_flags(p)
    add_dataclass_flags(p, TrainConfig, "training config overrides", skip=("seed",))

    p = add("predict", cmd_predict, "Segment an ROI with a trained checkpoint (mask PNG + overlay PNG).")
    p.add_argument("--checkpoint", required=True, help="weight archive written by train")
    p.add_argument("--config", help="model config (default: model.cfg next to the checkpoint)")
    p.add_argument("--image", required=True, help="RGB PNG of the ROI")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--batch-size", type=int, default=4, help="patches per forward pass (default 4)")

    p = add("eval", cmd_eval, "Score predicted masks against ground truth (table, CSV, bar chart).")
    p.add_argument("--pred", required=True, help="mask PNG or directory of masks")
    p.add_argument("--gt", required=True, help="mask PNG or directory of masks (same order)")
    p.add_argument("--out", help="report directory (scores.csv, scores.txt, per_class.png)")
    p.add_argument("--num-classes", type=int, default=8, help="number of labels scored (default 8)")

    p = add("gradcheck", cmd_gradcheck, "Run the finite-difference gradient suite; nonzero exit on failure.")
    p.add_argument("--case", action="append", help="run only this case (repeatable)")
    p.add_argument("--tolerance", type=float, default=1e-4, help="max relative error allowed (default 1e-4)")
    p.add_argument("--list", action="store_true", help="list case names and exit")

    p = add("rf", cmd_rf, "Print the receptive field of a fusion spec or of a model.")
    p.add_argument("--fusion", choices=["ours", "fusion_a", "fusion_b"], help="named fusion spec")
    model_flags(p, skip=("fusion",))

    def baseline_flags(p):
        add_dataclass_flags(p, BaselineConfig, "baseline config overrides", skip=("seed",))

    p = add("baseline-train", cmd_baseline_train, "Train the superpixel SVM baseline.")
    p.add_argument("--data", required=True, help="directory of image_NNNN.png / mask_NNNN.png")
    p.add_argument("--out", required=True, help="SVM weight archive path")
    p.add_argument("--num-classes", type=int, default=8, help="number of tissue labels (default 8)")
    baseline_flags(p)

    p = add("baseline-predict", cmd_baseline_predict, "Segment an image with the superpixel SVM baseline.")
    p.add_argument("--model", required=True, help="SVM weight archive")
    p.add_argument("--image", required=True, help="RGB PNG")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dump-features", action="store_true", help="also write the feature records")
    baseline_flags(p)

    p = add("diagnose", cmd_diagnose, "Cross-validate diagnostic classifiers from a case manifest.")
    p.add_argument("--manifest", required=True, help="CSV: case_id,mask_path,superpixel_path,diagnosis")
    p.add_argument("--task", default="four_class",
                   choices=["four_class", "invasive_vs_rest", "benign_vs_rest", "atypia_vs_dcis"],
                   help="diagnostic task (default four_class)")
    p.add_argument("--classifier", action="append", choices=["svm", "mlp"], help="repeatable (default svm)")
    p.add_argument("--variant", action="append", choices=["all", "no_stroma"], help="repeatable (default all)")
    p.add_argument("--folds", type=int, default=10, help="cross-validation folds (default 10)")
    p.add_argument("--repeats", type=int, default=10, help="cross-validation repeats (default 10)")
    p.add_argument("--out", help="results CSV; a per-repeat accuracy plot is written beside it as .png")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    if args.command == "diagnose":
        args.classifier = args.classifier or ["svm"]
        args.variant = args.variant or ["all"]
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        from threadpoolctl import threadpool_limits

        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DataError, UsageError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # internal fault: one line unless debugging
        if args.log_level == "debug":
            raise
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
