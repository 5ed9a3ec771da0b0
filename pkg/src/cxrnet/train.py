"""Head-only supervised training.

The backbone is frozen, so each image's feature block is a constant;
with ``cache_features`` every image is pushed through the backbone once
and the cached vector is reused for all epochs (training with the cache
off recomputes identical values, so histories match bit for bit).

Conventions: the loss gradient is the mean over the batch (a partial
final batch therefore takes a proportionally scaled step at the same
learning rate); head weights start from a seeded uniform
+-sqrt(6/(fan_in+fan_out)) draw with zero biases; epoch metrics are
recomputed over the full train and validation sets after the optimizer
steps, accumulating in float64, rather than averaged from batch losses.
There is no early stopping and no schedule: the run is exactly
``config.epochs`` epochs.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import data as data_mod
from .data import Sample, SplitAssignment, iter_batches
from .errors import ConfigError, DatasetError, ShapeError, TrainingDivergedError
from .model import ModelSpec, extract_features
from .weights import WeightSet, save_container, validate_against
from .errors import WeightValidationError

PROB_FLOOR = 1e-12  # cross-entropy clamp


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 80
    learning_rate: float = 0.001
    batch_size: int = 15
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    cache_features: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        # 0 is allowed so a frozen run (identical metrics every epoch) stays
        # expressible; negative rates never are.
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        for name in ("adam_beta1", "adam_beta2"):
            beta = getattr(self, name)
            if not 0 <= beta < 1:
                raise ConfigError(f"{name} must be in [0, 1), got {beta}")


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the shared step count."""

    m: dict
    v: dict
    t: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
    """One Adam update, in place on ``params`` and ``state``.

    t <- t+1; m <- b1*m + (1-b1)*g; v <- b2*v + (1-b2)*g^2;
    param <- param - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
    """
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, param in params.items():
        g = grads[name]
        if g.shape != param.shape:
            raise ShapeError(
                f"adam_step: gradient for {name!r} has shape {g.shape}, "
                f"parameter has {param.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        param -= lr * (m / bc1) / (np.sqrt(v / bc2) + epsilon)
    return params, state


def cross_entropy(probs, onehot) -> float:
    """-sum(y * log(max(p, 1e-12))), accumulated in float64."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(onehot, dtype=np.float64)
    return float(-(y * np.log(np.maximum(p, PROB_FLOOR))).sum())


def ce_softmax_grad(probs, onehot) -> np.ndarray:
    """Gradient of cross_entropy(softmax(z)) w.r.t. the logits: p - y."""
    return np.asarray(probs, dtype=np.float32) - np.asarray(onehot, dtype=np.float32)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def to_csv(self, path) -> None:
        lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
        for r in self.records:
            lines.append(
                f"{r.epoch},{r.train_loss:.9g},{r.train_acc:.9g},"
                f"{r.val_loss:.9g},{r.val_acc:.9g}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "TrainHistory":
        lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
        records = []
        for line in lines[1:]:
            e, tl, ta, vl, va = line.split(",")
            records.append(EpochRecord(int(e), float(tl), float(ta), float(vl), float(va)))
        return cls(records)


def init_head(spec: ModelSpec, seed: int) -> WeightSet:
    """Seeded uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    head: WeightSet = {}
    for layer in spec.head_layers():
        if layer.kind != "dense":
            continue
        nin, nout = layer.params
        limit = math.sqrt(6.0 / (nin + nout))
        head[f"{layer.name}.weight"] = rng.uniform(-limit, limit, (nout, nin)).astype(np.float32)
        head[f"{layer.name}.bias"] = np.zeros(nout, dtype=np.float32)
    return head


def _head_param_names(spec: ModelSpec):
    return [l.name for l in spec.head_layers() if l.kind == "dense"]


def _batch_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _head_batch_forward(params: dict, names, x: np.ndarray):
    """Vectorized head forward over a feature matrix [B, n].

    Overflow is not trapped here; divergence surfaces as a non-finite
    loss, which the epoch loop turns into TrainingDivergedError.
    """
    w1 = params[f"{names[0]}.weight"]
    b1 = params[f"{names[0]}.bias"]
    w2 = params[f"{names[1]}.weight"]
    b2 = params[f"{names[1]}.bias"]
    with np.errstate(over="ignore", invalid="ignore"):
        h_pre = x @ w1.T + b1
        h = np.maximum(h_pre, np.float32(0.0))
        logits = h @ w2.T + b2
        return h_pre, h, logits, _batch_softmax(logits)


def _metrics(params, names, x, y) -> tuple[float, float]:
    """(mean cross-entropy, accuracy) over a full feature matrix, float64 means."""
    _, _, _, probs = _head_batch_forward(params, names, x)
    p64 = probs.astype(np.float64)
    losses = -(y.astype(np.float64) * np.log(np.maximum(p64, PROB_FLOOR))).sum(axis=1)
    loss = float(losses.mean())
    acc = float((probs.argmax(axis=1) == y.argmax(axis=1)).mean(dtype=np.float64))
    return loss, acc


def _feature_matrix(samples: Sequence[Sample], loader, num_classes: int):
    x = np.stack([loader(s) for s in samples])
    y = data_mod.one_hot([s.label for s in samples], num_classes)
    return x, y


def train_head(spec: ModelSpec, weights: WeightSet, split: SplitAssignment,
               config: TrainConfig, out_dir=None,
               image_loader: Callable[[Sample], np.ndarray] | None = None,
               ) -> tuple[WeightSet, TrainHistory]:
    """Train the dense head against frozen backbone features.

    ``image_loader`` maps a sample to its preprocessed input tensor
    (default: ``data.preprocess`` on the sample path). When ``out_dir`` is
    given, the history CSV and the trained head container are persisted
    there (``history.csv``, ``head/``). Fully deterministic for a fixed
    (weights, split, config).
    """
    report = validate_against(spec, weights, trainable=False)
    if not report.passed:
        raise WeightValidationError(report.describe())
    if not split.train:
        raise DatasetError("training set is empty")
    if not split.val:
        raise DatasetError("validation set is empty")
    if image_loader is None:
        image_loader = lambda s: data_mod.preprocess(s.path)

    num_classes = spec.num_classes
    names = _head_param_names(spec)
    if len(names) != 2:
        raise ShapeError(f"expected a two-layer dense head, found {names}")

    def features_of(sample: Sample) -> np.ndarray:
        feats, _, _ = extract_features(spec, weights, image_loader(sample))
        return feats.reshape(-1)

    if config.cache_features:
        cache: dict = {}
        for s in {s.path: s for s in (*split.train, *split.val)}.values():
            cache[s.path] = features_of(s)
        loader = lambda s: cache[s.path]
    else:
        loader = features_of

    params = init_head(spec, config.seed)
    state = AdamState.for_params(params)
    history = TrainHistory()

    for epoch in range(1, config.epochs + 1):
        for batch_no, batch in enumerate(
            iter_batches(split.train, config.batch_size, epoch_seed=[config.seed, epoch],
                         loader=loader, num_classes=num_classes)
        ):
            x, y = batch.inputs, batch.targets
            h_pre, h, _, probs = _head_batch_forward(params, names, x)
            batch_loss = -(y.astype(np.float64)
                           * np.log(np.maximum(probs.astype(np.float64), PROB_FLOOR))
                           ).sum(axis=1).mean()
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            dlogits = (probs - y) / np.float32(len(x))
            grads = {
                f"{names[1]}.weight": dlogits.T @ h,
                f"{names[1]}.bias": dlogits.sum(axis=0),
            }
            dh = dlogits @ params[f"{names[1]}.weight"]
            dh_pre = dh * (h_pre > 0)
            grads[f"{names[0]}.weight"] = dh_pre.T @ x
            grads[f"{names[0]}.bias"] = dh_pre.sum(axis=0)
            adam_step(params, grads, state, config.learning_rate,
                      config.adam_beta1, config.adam_beta2, config.adam_epsilon)

        x_train, y_train = _feature_matrix(split.train, loader, num_classes)
        x_val, y_val = _feature_matrix(split.val, loader, num_classes)
        train_loss, train_acc = _metrics(params, names, x_train, y_train)
        val_loss, val_acc = _metrics(params, names, x_val, y_val)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingDivergedError(f"non-finite epoch metrics at epoch {epoch}")
        history.records.append(EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc))

    head = {k: v.copy() for k, v in params.items()}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        history.to_csv(out_dir / "history.csv")
        save_container(head, out_dir / "head", metadata={
            "kind": "trained-head",
            "epochs": str(config.epochs),
            "learning_rate": repr(config.learning_rate),
            "batch_size": str(config.batch_size),
            "seed": str(config.seed),
        })
    return head, history
