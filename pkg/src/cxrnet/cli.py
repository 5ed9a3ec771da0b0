"""Command-line interface.

Subcommands: ``split``, ``train``, ``eval``, ``explain`` (the pipeline),
plus ``init-backbone`` (seeded random backbone container) and
``synth-data`` (procedural demo corpus). Every command is deterministic
given its flags and inputs and echoes its resolved configuration as JSON
on stdout; commands with an output directory also write it there as
``config.json``.

Flags may come from a JSON config file (``--config``) mirroring the flag
names with underscores; explicit flags override file values, file values
override defaults.

Exit codes: 0 success, 1 usage/configuration error, 2 data or weight
validation error, 3 numerical failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import evaluate as eval_mod
from . import synth
from .errors import (
    ConfigError,
    ContainerError,
    CxrnetError,
    DatasetError,
    ShapeError,
    TrainingDivergedError,
    WeightValidationError,
)
from .gradcam import grad_cam, write_cam_outputs
from .model import CLASS_NAMES, build_small_cnn, build_vgg16
from .tensor import bilinear_resize
from .train import TrainConfig, train_head
from .weights import load_container, save_container, validate_against

ARCHES = {"vgg16": build_vgg16, "small": build_small_cnn}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; this artifact reserves 2 for data
    # problems, so route usage errors through ConfigError -> exit 1.
    def error(self, message):
        raise ConfigError(message)


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--ratios needs three comma-separated values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad --ratios value {text!r}: {exc}") from exc


def _resolve(args, defaults: dict) -> dict:
    """default < config-file < explicit flag (flags parse with default=None)."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}; valid: {sorted(defaults)}")
        resolved.update(file_cfg)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _echo_config(command: str, resolved: dict, out_dir: Path | None = None) -> None:
    doc = {"command": command, **resolved}
    text = json.dumps(doc, indent=2, sort_keys=True, default=str)
    print(text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(text + "\n", encoding="utf-8")


def _build_spec(arch: str, num_classes: int = 3):
    if arch not in ARCHES:
        raise ConfigError(f"unknown architecture {arch!r}; choose from {sorted(ARCHES)}")
    return ARCHES[arch](num_classes)


def _load_merged(spec, backbone_dir, head_dir):
    merged = dict(load_container(backbone_dir))
    merged.update(load_container(head_dir))
    report = validate_against(spec, merged)
    if not report.passed:
        raise WeightValidationError(report.describe())
    return merged


def cmd_split(args) -> int:
    resolved = _resolve(args, {
        "data": None, "ratios": "0.8,0.1,0.1", "seed": 0, "out": None,
    })
    if not resolved["data"] or not resolved["out"]:
        raise ConfigError("split requires --data and --out")
    ratios = _parse_ratios(resolved["ratios"]) if isinstance(resolved["ratios"], str) \
        else tuple(resolved["ratios"])
    index = data_mod.ingest(resolved["data"])
    assignment = data_mod.split(index, ratios=ratios, seed=int(resolved["seed"]))
    data_mod.save_split(assignment, resolved["out"])
    _echo_config("split", resolved)
    for name, count in zip(data_mod.CLASS_DIRS, index.counts):
        print(f"class {name}: {count} images")
    print(f"train {len(assignment.train)} / val {len(assignment.val)} / "
          f"test {len(assignment.test)} -> {resolved['out']}")
    return 0


def cmd_train(args) -> int:
    resolved = _resolve(args, {
        "data": None, "split": None, "backbone": None, "out": None,
        "arch": "vgg16", "normalize": "imagenet",
        "epochs": 80, "learning_rate": 0.001, "batch_size": 15, "seed": 0,
        "cache_features": True,
    })
    for key in ("data", "split", "backbone", "out"):
        if not resolved[key]:
            raise ConfigError(f"train requires --{key}")
    spec = _build_spec(resolved["arch"])
    backbone = load_container(resolved["backbone"])
    assignment = data_mod.load_split(resolved["split"], root=resolved["data"])
    config = TrainConfig(
        epochs=int(resolved["epochs"]),
        learning_rate=float(resolved["learning_rate"]),
        batch_size=int(resolved["batch_size"]),
        seed=int(resolved["seed"]),
        cache_features=bool(resolved["cache_features"]),
    )
    out_dir = Path(resolved["out"])
    _echo_config("train", resolved, out_dir)
    loader = lambda s: data_mod.preprocess(s.path, normalize=resolved["normalize"])
    _, history = train_head(spec, backbone, assignment, config,
                            out_dir=out_dir, image_loader=loader)
    last = history.records[-1]
    print(f"epoch {last.epoch}: train_loss {last.train_loss:.6f} "
          f"train_acc {last.train_acc:.4f} val_loss {last.val_loss:.6f} "
          f"val_acc {last.val_acc:.4f}")
    print(f"history -> {out_dir / 'history.csv'}; head -> {out_dir / 'head'}")
    return 0


def _pairs_from_file(path) -> list[tuple[int, int]]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read predictions file {path}: {exc}") from exc

    def to_index(v):
        if isinstance(v, str):
            if v not in CLASS_NAMES:
                raise DatasetError(f"unknown class name {v!r} in predictions file")
            return CLASS_NAMES.index(v)
        return int(v)

    try:
        return [(to_index(rec["true"]), to_index(rec["pred"])) for rec in doc]
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"malformed predictions file {path}: {exc}") from exc


def cmd_eval(args) -> int:
    resolved = _resolve(args, {
        "data": None, "split": None, "backbone": None, "head": None, "out": None,
        "arch": "vgg16", "normalize": "imagenet", "predictions": None,
    })
    if not resolved["out"]:
        raise ConfigError("eval requires --out")
    out_dir = Path(resolved["out"])

    if resolved["predictions"]:
        pairs = _pairs_from_file(resolved["predictions"])
        matrix = eval_mod.confusion(pairs)
        report = eval_mod.summarize(matrix)
    else:
        for key in ("data", "split", "backbone", "head"):
            if not resolved[key]:
                raise ConfigError(f"eval requires --{key} (or --predictions)")
        spec = _build_spec(resolved["arch"])
        merged = _load_merged(spec, resolved["backbone"], resolved["head"])
        assignment = data_mod.load_split(resolved["split"], root=resolved["data"])
        if not assignment.test:
            raise DatasetError("the split has an empty test set")
        loader = lambda s: data_mod.preprocess(s.path, normalize=resolved["normalize"])
        predictions, failures = eval_mod.predict(spec, merged, assignment.test,
                                                 image_loader=loader)
        matrix = eval_mod.confusion([(p.true_label, p.predicted_label)
                                     for p in predictions])
        wrong = [p.path for p in predictions if p.true_label != p.predicted_label]
        report = eval_mod.summarize(matrix, misclassified=wrong, failed=failures)

    _echo_config("eval", resolved, out_dir)
    eval_mod.save_report(report, out_dir / "report.json")
    text = eval_mod.format_report(report)
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_explain(args) -> int:
    resolved = _resolve(args, {
        "image": None, "backbone": None, "head": None, "out": None,
        "arch": "vgg16", "normalize": "imagenet", "target_class": None,
    })
    for key in ("image", "backbone", "head", "out"):
        if not resolved[key]:
            raise ConfigError(f"explain requires --{key}")
    images = resolved["image"] if isinstance(resolved["image"], list) else [resolved["image"]]
    spec = _build_spec(resolved["arch"])
    merged = _load_merged(spec, resolved["backbone"], resolved["head"])
    out_dir = Path(resolved["out"])
    _echo_config("explain", resolved, out_dir)
    target = resolved["target_class"]
    target = None if target is None else int(target)
    size = spec.input_shape[1]
    for image_path in images:
        tensor = data_mod.preprocess(image_path, normalize=resolved["normalize"])
        result = grad_cam(spec, merged, tensor, target_class=target)
        original = data_mod.load_rgb(image_path)
        if original.shape[1] != size or original.shape[2] != size:
            original = bilinear_resize(original, size, size)
        original = original / np.float32(255.0)
        files = write_cam_outputs(result, original, out_dir, Path(image_path).stem,
                                  spec.class_names)
        print(f"{image_path}: class {spec.class_names[result.class_index]} "
              f"probs {[round(float(p), 4) for p in result.predicted_probs]} "
              f"-> {', '.join(str(f) for f in files)}")
    return 0


def cmd_init_backbone(args) -> int:
    resolved = _resolve(args, {"arch": "small", "seed": 0, "out": None, "num_classes": 3})
    if not resolved["out"]:
        raise ConfigError("init-backbone requires --out")
    spec = _build_spec(resolved["arch"], int(resolved["num_classes"]))
    weights = synth.random_backbone(spec, seed=int(resolved["seed"]))
    save_container(weights, resolved["out"], metadata={
        "kind": "random-backbone", "arch": resolved["arch"], "seed": str(resolved["seed"]),
    })
    _echo_config("init-backbone", resolved)
    print(f"wrote {len(weights)} tensors -> {resolved['out']}")
    return 0


def cmd_synth_data(args) -> int:
    resolved = _resolve(args, {"out": None, "counts": "175,100,100", "size": 96, "seed": 0})
    if not resolved["out"]:
        raise ConfigError("synth-data requires --out")
    counts = resolved["counts"]
    if isinstance(counts, str):
        try:
            counts = tuple(int(c) for c in counts.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --counts value {resolved['counts']!r}") from exc
    if len(counts) != 3 or any(c < 1 for c in counts):
        raise ConfigError(f"--counts needs three positive values, got {counts}")
    written = synth.make_corpus(resolved["out"], counts=counts,
                                size=int(resolved["size"]), seed=int(resolved["seed"]))
    _echo_config("synth-data", resolved)
    for name, count in written.items():
        print(f"class {name}: {count} images")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cxrnet", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("split", help="stratified train/val/test split manifest")
    p.add_argument("--data", help="dataset root with covid/normal/infection dirs")
    p.add_argument("--ratios", help="train,val,test fractions (default 0.8,0.1,0.1)")
    p.add_argument("--seed", type=int, help="shuffle seed (default 0)")
    p.add_argument("--out", help="split manifest JSON to write")
    p.add_argument("--config", help="JSON config file mirroring the flags")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the dense head on frozen backbone features")
    p.add_argument("--data", help="dataset root")
    p.add_argument("--split", help="split manifest from the split command")
    p.add_argument("--backbone", help="backbone weight container directory")
    p.add_argument("--out", help="output directory (history.csv, head/, config.json)")
    p.add_argument("--arch", choices=sorted(ARCHES), help="model architecture (default vgg16)")
    p.add_argument("--normalize", choices=["imagenet", "unit"],
                   help="input normalization (default imagenet)")
    p.add_argument("--epochs", type=int, help="training epochs (default 80)")
    p.add_argument("--learning-rate", dest="learning_rate", type=float,
                   help="Adam learning rate (default 0.001)")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="batch size (default 15)")
    p.add_argument("--seed", type=int, help="init/shuffle seed (default 0)")
    p.add_argument("--no-cache-features", dest="cache_features", action="store_false",
                   default=None, help="recompute backbone features every epoch")
    p.add_argument("--config", help="JSON config file mirroring the flags")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="confusion matrix and accuracy on the test split")
    p.add_argument("--data", help="dataset root")
    p.add_argument("--split", help="split manifest")
    p.add_argument("--backbone", help="backbone weight container")
    p.add_argument("--head", help="trained head container")
    p.add_argument("--out", help="output directory (report.json, report.txt)")
    p.add_argument("--arch", choices=sorted(ARCHES))
    p.add_argument("--normalize", choices=["imagenet", "unit"])
    p.add_argument("--predictions",
                   help="JSON list of {'true': label, 'pred': label} records; "
                        "skips the model and scores these pairs instead")
    p.add_argument("--config", help="JSON config file mirroring the flags")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="class-activation heatmaps for images")
    p.add_argument("--image", nargs="+", help="input image file(s)")
    p.add_argument("--backbone", help="backbone weight container")
    p.add_argument("--head", help="trained head container")
    p.add_argument("--out", help="output directory (per image: .cam.png/.cam.csv/.json)")
    p.add_argument("--target-class", dest="target_class", type=int,
                   help="class index to explain (default: predicted class)")
    p.add_argument("--arch", choices=sorted(ARCHES))
    p.add_argument("--normalize", choices=["imagenet", "unit"])
    p.add_argument("--config", help="JSON config file mirroring the flags")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("init-backbone", help="write a seeded random backbone container")
    p.add_argument("--arch", choices=sorted(ARCHES), help="architecture (default small)")
    p.add_argument("--seed", type=int, help="rng seed (default 0)")
    p.add_argument("--num-classes", dest="num_classes", type=int)
    p.add_argument("--out", help="container directory to write")
    p.add_argument("--config", help="JSON config file mirroring the flags")
    p.set_defaults(func=cmd_init_backbone)

    p = sub.add_parser("synth-data", help="generate the procedural texture corpus")
    p.add_argument("--out", help="dataset root to create")
    p.add_argument("--counts", help="per-class image counts (default 175,100,100)")
    p.add_argument("--size", type=int, help="square image size in pixels (default 96)")
    p.add_argument("--seed", type=int, help="rng seed (default 0)")
    p.add_argument("--config", help="JSON config file mirroring the flags")
    p.set_defaults(func=cmd_synth_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DatasetError, ContainerError, WeightValidationError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDivergedError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CxrnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
