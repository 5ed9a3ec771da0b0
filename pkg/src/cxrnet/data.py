"""Dataset ingestion, preprocessing, deterministic splitting, batching.

Datasets live on disk as ``<root>/{covid,normal,infection}/*.{png,jpg,jpeg}``
(nested subdirectories are allowed and become the sample's source tag).
Class indices are fixed everywhere: 0=COVID, 1=NORMAL, 2=INFECTION.

Splitting is stratified per class with a seeded numpy PCG64 generator
(``np.random.default_rng(seed)``, classes shuffled in index order from one
stream): floor(n * val_ratio) samples go to validation, floor(n *
test_ratio) to test, the remainder to train. The same (index, seed) always
produces the same assignment, and the JSON manifest written for a split is
byte-stable.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DatasetError
from .model import CLASS_NAMES, INPUT_SIZE
from .tensor import bilinear_resize

logger = logging.getLogger(__name__)

CLASS_DIRS = ("covid", "normal", "infection")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

# Channel statistics of the corpus the backbone was pretrained on; the
# sensible default when importing those weights. "unit" skips this and
# keeps plain [0,1] intensities.
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


@dataclass(frozen=True, order=True)
class Sample:
    path: Path
    label: int
    source: str = ""


@dataclass(frozen=True)
class DatasetIndex:
    """All decodable samples, sorted by path, plus per-class counts."""

    samples: tuple[Sample, ...]
    counts: tuple[int, ...]


@dataclass(frozen=True)
class SplitAssignment:
    train: tuple[Sample, ...]
    val: tuple[Sample, ...]
    test: tuple[Sample, ...]
    seed: int
    ratios: tuple[float, float, float]


class Batch(NamedTuple):
    inputs: np.ndarray   # [B, ...] stacked loader outputs
    targets: np.ndarray  # [B, k] one-hot float32
    samples: tuple[Sample, ...]


def _decodable(path: Path) -> bool:
    try:
        with Image.open(path) as im:
            im.verify()
        return True
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        logger.warning("skipping undecodable image %s: %s", path, exc)
        return False


def ingest(root) -> DatasetIndex:
    """Index every decodable image under the three class directories.

    Undecodable files are logged as warnings and skipped. A missing or
    effectively empty class directory is an error naming the class. The
    result is sorted by path, so directory enumeration order never
    matters. Duplicate image content under two names yields two samples.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    samples = []
    counts = [0] * len(CLASS_DIRS)
    for label, cname in enumerate(CLASS_DIRS):
        cdir = root / cname
        if not cdir.is_dir():
            raise DatasetError(f"missing class directory {cname!r} under {root}")
        files = sorted(
            p for p in cdir.rglob("*")
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
        )
        kept = [p for p in files if _decodable(p)]
        if not kept:
            raise DatasetError(f"class directory {cname!r} has no decodable images")
        for p in kept:
            source = p.parent.relative_to(root).as_posix()
            samples.append(Sample(p, label, source))
        counts[label] = len(kept)
    samples.sort(key=lambda s: s.path.as_posix())
    return DatasetIndex(tuple(samples), tuple(counts))


def load_rgb(path) -> np.ndarray:
    """Decode an image to a [3,H,W] float32 tensor of 0..255 intensities.

    Grayscale is replicated onto three channels, alpha is dropped.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DatasetError(f"cannot decode image {path}: {exc}") from exc
    return np.ascontiguousarray(arr.transpose(2, 0, 1).astype(np.float32))


def preprocess(path, size: int = INPUT_SIZE, normalize: str = "imagenet") -> np.ndarray:
    """Decode -> force RGB -> bilinear resize to size x size -> scale to
    [0,1] -> per-channel normalization ("imagenet" statistics or "unit"
    for plain /255)."""
    chw = load_rgb(path)
    if chw.shape[1] != size or chw.shape[2] != size:
        chw = bilinear_resize(chw, size, size)
    chw = chw / np.float32(255.0)
    if normalize == "imagenet":
        chw = (chw - IMAGENET_MEAN[:, None, None]) / IMAGENET_STD[:, None, None]
    elif normalize != "unit":
        raise ConfigError(f"unknown normalization {normalize!r} (use 'imagenet' or 'unit')")
    return np.ascontiguousarray(chw, dtype=np.float32)


def _floor_share(n: int, ratio: float) -> int:
    # floor(n*ratio) with a 1e-9 guard so binary float noise cannot pull
    # an exact product below its integer value
    return int(math.floor(n * ratio + 1e-9))


def split(index: DatasetIndex, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitAssignment:
    """Stratified train/val/test partition, deterministic in (index, seed)."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise ConfigError(f"ratios must be (train, val, test), got {ratios}")
    if any(r < 0 for r in ratios):
        raise ConfigError(f"ratios must be non-negative, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {ratios} (sum {sum(ratios)})")
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for label, cname in enumerate(CLASS_DIRS):
        cls = [s for s in index.samples if s.label == label]
        if len(cls) < 3:
            raise DatasetError(f"class {cname!r} has {len(cls)} samples; need at least 3")
        order = rng.permutation(len(cls))
        shuffled = [cls[i] for i in order]
        n_val = _floor_share(len(cls), ratios[1])
        n_test = _floor_share(len(cls), ratios[2])
        val += shuffled[:n_val]
        test += shuffled[n_val:n_val + n_test]
        train += shuffled[n_val + n_test:]
    key = lambda s: s.path.as_posix()
    return SplitAssignment(
        tuple(sorted(train, key=key)), tuple(sorted(val, key=key)),
        tuple(sorted(test, key=key)), int(seed), ratios,
    )


def one_hot(labels: Sequence[int], num_classes: int = len(CLASS_NAMES)) -> np.ndarray:
    y = np.zeros((len(labels), num_classes), dtype=np.float32)
    for i, label in enumerate(labels):
        if not 0 <= label < num_classes:
            raise DatasetError(f"label {label} out of range for {num_classes} classes")
        y[i, label] = 1.0
    return y


def iter_batches(samples: Sequence[Sample], batch_size: int = 15, epoch_seed=0,
                 loader: Callable[[Sample], np.ndarray] | None = None,
                 num_classes: int = len(CLASS_NAMES)) -> Iterator[Batch]:
    """Seeded-shuffle batch stream; the final partial batch is kept.

    ``loader`` maps a sample to its input tensor (default: ``preprocess``
    on the sample path). ``epoch_seed`` may be an int or a sequence of
    ints and fully determines the order.
    """
    if not samples:
        raise DatasetError("cannot batch an empty sample list")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if loader is None:
        loader = lambda s: preprocess(s.path)
    order = np.random.default_rng(epoch_seed).permutation(len(samples))
    for start in range(0, len(samples), batch_size):
        chunk = tuple(samples[i] for i in order[start:start + batch_size])
        inputs = np.stack([loader(s) for s in chunk])
        targets = one_hot([s.label for s in chunk], num_classes)
        yield Batch(inputs, targets, chunk)


def batches(samples: Sequence[Sample], batch_size: int = 15, epoch_seed=0,
            loader: Callable[[Sample], np.ndarray] | None = None,
            num_classes: int = len(CLASS_NAMES)) -> list[Batch]:
    """Materialized form of ``iter_batches``."""
    return list(iter_batches(samples, batch_size, epoch_seed, loader, num_classes))


def save_split(assignment: SplitAssignment, path) -> None:
    """Persist a split as replayable JSON; identical splits give identical bytes."""
    doc = {
        "seed": assignment.seed,
        "ratios": list(assignment.ratios),
        "train": [s.path.as_posix() for s in assignment.train],
        "val": [s.path.as_posix() for s in assignment.val],
        "test": [s.path.as_posix() for s in assignment.test],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def label_for_path(path: Path) -> int:
    """Class index from the nearest path component named like a class dir."""
    for part in reversed(path.parts):
        lowered = part.lower()
        if lowered in CLASS_DIRS:
            return CLASS_DIRS.index(lowered)
    raise DatasetError(f"cannot infer a class from path {path}")


def load_split(path, root=None) -> SplitAssignment:
    """Read a split manifest back; labels are re-derived from the paths."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read split manifest {path}: {exc}") from exc

    def to_samples(paths):
        out = []
        for raw in paths:
            p = Path(raw)
            if root is not None and not p.exists():
                p = Path(root) / raw
            out.append(Sample(p, label_for_path(p), p.parent.name))
        return tuple(out)

    try:
        return SplitAssignment(
            to_samples(doc["train"]), to_samples(doc["val"]), to_samples(doc["test"]),
            int(doc["seed"]), tuple(float(r) for r in doc["ratios"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"malformed split manifest {path}: {exc}") from exc
