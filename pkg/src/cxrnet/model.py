"""Model definition and forward execution.

A model is a flat list of layers over [3, 237, 237] inputs. The
convolutional part (the backbone) is frozen: conv kernels and biases are
loaded from a container and never trained here. The dense head is the
only trainable part. ``build_vgg16`` produces the standard 13-conv VGG-16
feature stack; ``build_small_cnn`` is a reduced five-conv variant with the
same layer kinds, used where a full backbone would be wasteful (synthetic
end-to-end runs, fast tests).

Layer kinds: conv3x3 (stride 1, pad 1), relu, maxpool2 (2x2, stride 2),
flatten, dense, softmax. Weight tensor names are derived from layer
names: ``<layer>.weight`` / ``<layer>.bias``; conv kernels are
[out, in, 3, 3], dense weights [out, in]. The full naming table lives in
docs/weights-format.md.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, WeightValidationError
from .tensor import astensor, conv2d, dense, maxpool2d, relu, softmax
from .weights import WeightSet, validate_against

CLASS_NAMES = ("COVID", "NORMAL", "INFECTION")

LAYER_KINDS = ("conv3x3", "relu", "maxpool2", "flatten", "dense", "softmax")

INPUT_SIZE = 237


@dataclass(frozen=True)
class LayerSpec:
    """One layer: kind, stable name, kind-specific extents, trainability.

    ``params`` is (in_channels, out_channels) for conv3x3, (in_features,
    out_features) for dense, and None otherwise. Only dense layers are
    trainable; conv layers are always frozen.
    """

    kind: str
    name: str
    params: tuple[int, int] | None = None
    trainable: bool = False


@dataclass(frozen=True)
class ForwardTrace:
    """Forward outputs, plus captured activations when requested.

    ``last_conv_activation`` is the post-ReLU input of the final pool,
    ``backbone_features`` the final pool's output (the flatten input), and
    ``pool_indices`` the final pool's winner offsets. The three are None
    when the forward ran with capture=False.
    """

    logits: np.ndarray
    probs: np.ndarray
    last_conv_activation: np.ndarray | None = None
    backbone_features: np.ndarray | None = None
    pool_indices: np.ndarray | None = None


class ModelSpec:
    """Validated layer list with per-layer output shapes.

    Construction walks the layer chain from ``input_shape`` and fails on
    any inconsistent pair (wrong channel counts, dense features that do
    not match the flattened extent, pooling below the window size), on a
    trainable conv/pool, on a frozen dense layer, or on a softmax that is
    not the unique final layer.
    """

    def __init__(self, input_shape, layers, class_names=CLASS_NAMES):
        self.input_shape = tuple(int(n) for n in input_shape)
        self.layers = tuple(layers)
        self.class_names = tuple(class_names)
        if len(self.input_shape) != 3:
            raise ShapeError(f"input_shape must be [C,H,W], got {self.input_shape}")
        if not self.layers:
            raise ShapeError("a model needs at least one layer")
        self._output_shapes = self._chain_shapes()
        if [l.kind for l in self.layers].count("softmax") != 1 or self.layers[-1].kind != "softmax":
            raise ShapeError("the model must contain exactly one softmax, as the last layer")
        if self.num_classes != len(self.class_names):
            raise ShapeError(
                f"final dense produces {self.num_classes} scores but there are "
                f"{len(self.class_names)} class names"
            )

    def _chain_shapes(self):
        shapes = []
        cur = self.input_shape
        for layer in self.layers:
            if layer.kind not in LAYER_KINDS:
                raise ShapeError(f"unknown layer kind {layer.kind!r} ({layer.name})")
            if layer.kind in ("conv3x3", "maxpool2") and layer.trainable:
                raise ShapeError(f"layer {layer.name} ({layer.kind}) must be frozen")
            if layer.kind == "dense" and not layer.trainable:
                raise ShapeError(f"dense layer {layer.name} must be trainable")
            if layer.kind == "conv3x3":
                cin, cout = layer.params
                if len(cur) != 3 or cur[0] != cin:
                    raise ShapeError(
                        f"layer {layer.name}: expects {cin} input channels, gets {cur}"
                    )
                cur = (cout, cur[1], cur[2])
            elif layer.kind == "relu":
                pass
            elif layer.kind == "maxpool2":
                if len(cur) != 3:
                    raise ShapeError(f"layer {layer.name}: pooling needs [C,H,W], gets {cur}")
                c, h, w = cur
                if h < 2 or w < 2:
                    raise ShapeError(f"layer {layer.name}: cannot pool {h}x{w} below 2x2")
                cur = (c, (h - 2) // 2 + 1, (w - 2) // 2 + 1)
            elif layer.kind == "flatten":
                n = 1
                for extent in cur:
                    n *= extent
                cur = (n,)
            elif layer.kind == "dense":
                nin, nout = layer.params
                if cur != (nin,):
                    raise ShapeError(
                        f"layer {layer.name}: expects {nin} input features, gets {cur}"
                    )
                cur = (nout,)
            elif layer.kind == "softmax":
                if len(cur) != 1:
                    raise ShapeError(f"layer {layer.name}: softmax needs a vector, gets {cur}")
            shapes.append(cur)
        return tuple(shapes)

    @property
    def num_classes(self) -> int:
        for layer in reversed(self.layers):
            if layer.kind == "dense":
                return layer.params[1]
        raise ShapeError("the model has no dense layer")

    @property
    def feature_shape(self) -> tuple[int, ...]:
        """Shape entering flatten, i.e. the backbone feature block."""
        for i, layer in enumerate(self.layers):
            if layer.kind == "flatten":
                return self.input_shape if i == 0 else self._output_shapes[i - 1]
        raise ShapeError("the model has no flatten layer")

    def output_shape(self, layer_index: int) -> tuple[int, ...]:
        return self._output_shapes[layer_index]

    def backbone_layers(self) -> tuple[LayerSpec, ...]:
        i = [l.kind for l in self.layers].index("flatten")
        return self.layers[:i]

    def head_layers(self) -> tuple[LayerSpec, ...]:
        i = [l.kind for l in self.layers].index("flatten")
        return self.layers[i:]

    def required_tensors(self, trainable: bool | None = None) -> dict[str, tuple[int, ...]]:
        """Tensor name -> shape for the layers that carry weights."""
        out = {}
        for layer in self.layers:
            if trainable is not None and layer.trainable != trainable:
                continue
            if layer.kind == "conv3x3":
                cin, cout = layer.params
                out[f"{layer.name}.weight"] = (cout, cin, 3, 3)
                out[f"{layer.name}.bias"] = (cout,)
            elif layer.kind == "dense":
                nin, nout = layer.params
                out[f"{layer.name}.weight"] = (nout, nin)
                out[f"{layer.name}.bias"] = (nout,)
        return out


def build_cnn(block_channels, convs_per_block, num_classes=3, hidden=256,
              input_size=INPUT_SIZE, class_names=CLASS_NAMES) -> ModelSpec:
    """Assemble a VGG-style spec: conv blocks with trailing 2x2 pools, then
    flatten -> dense(hidden) -> relu -> dense(num_classes) -> softmax."""
    if num_classes < 2:
        raise ShapeError(f"need at least 2 classes, got {num_classes}")
    layers = []
    channels = 3
    size = input_size
    for b, (width, n_convs) in enumerate(zip(block_channels, convs_per_block), start=1):
        for i in range(1, n_convs + 1):
            layers.append(LayerSpec("conv3x3", f"block{b}.conv{i}", (channels, width)))
            layers.append(LayerSpec("relu", f"block{b}.relu{i}"))
            channels = width
        layers.append(LayerSpec("maxpool2", f"pool{b}"))
        size = (size - 2) // 2 + 1
    flat = channels * size * size
    layers.append(LayerSpec("flatten", "flatten"))
    layers.append(LayerSpec("dense", "head.fc1", (flat, hidden), trainable=True))
    layers.append(LayerSpec("relu", "head.relu"))
    layers.append(LayerSpec("dense", "head.fc2", (hidden, num_classes), trainable=True))
    layers.append(LayerSpec("softmax", "softmax"))
    if len(class_names) != num_classes:
        class_names = tuple(f"CLASS{i}" for i in range(num_classes))
    return ModelSpec((3, input_size, input_size), layers, class_names)


def build_vgg16(num_classes: int = 3, hidden: int = 256) -> ModelSpec:
    """VGG-16 feature stack (13 convs in blocks of 2,2,3,3,3 at widths
    64,128,256,512,512) plus the dense head. 237x237 inputs give 512x7x7
    backbone features and a 25088-wide flatten."""
    return build_cnn((64, 128, 256, 512, 512), (2, 2, 3, 3, 3),
                     num_classes=num_classes, hidden=hidden)


def build_small_cnn(num_classes: int = 3, hidden: int = 256) -> ModelSpec:
    """Reduced backbone: one 3x3 conv per block at widths 8,16,32,64,64,
    five pools (237 -> 7), 64x7x7 features. Same layer kinds and naming
    scheme as the full model; meant for synthetic data and fast runs."""
    return build_cnn((8, 16, 32, 64, 64), (1, 1, 1, 1, 1),
                     num_classes=num_classes, hidden=hidden)


def _require_valid(spec: ModelSpec, weights: WeightSet, trainable: bool | None) -> None:
    report = validate_against(spec, weights, trainable=trainable)
    if not report.passed:
        raise WeightValidationError(report.describe())


def extract_features(spec: ModelSpec, weights: WeightSet, image,
                     capture: bool = False):
    """Run the frozen backbone only.

    Returns (features, last_conv_activation, pool_indices); the latter two
    are None unless ``capture``. Only backbone tensors are validated, so
    this works before any head has been trained.
    """
    _require_valid(spec, weights, trainable=False)
    act = astensor(image)
    if act.shape != spec.input_shape:
        raise ShapeError(f"input shape {act.shape} does not match model {spec.input_shape}")
    pool_input = None
    pool_indices = None
    for layer in spec.backbone_layers():
        if layer.kind == "conv3x3":
            act = conv2d(act, weights[f"{layer.name}.weight"],
                         weights[f"{layer.name}.bias"], stride=1, padding=1)
        elif layer.kind == "relu":
            act = relu(act)
        elif layer.kind == "maxpool2":
            pool_input = act
            act, pool_indices = maxpool2d(act, window=2, stride=2)
    if capture:
        return act, pool_input, pool_indices
    return act, None, None


def head_forward(spec: ModelSpec, weights: WeightSet, features):
    """Run the trainable head on backbone features.

    Returns (logits, probs, hidden) where ``hidden`` is the post-ReLU
    activation before the final dense layer. Composing this with
    ``extract_features`` reproduces ``forward`` bit-exactly.
    """
    _require_valid(spec, weights, trainable=True)
    features = astensor(features)
    expected = spec.feature_shape
    if features.shape != expected and features.shape != (int(np.prod(expected)),):
        raise ShapeError(
            f"features have shape {features.shape}, model expects {expected} "
            f"(or its flattened form)"
        )
    act = features.reshape(-1)
    hidden = None
    logits = None
    for layer in spec.head_layers():
        if layer.kind == "dense":
            act = dense(act, weights[f"{layer.name}.weight"], weights[f"{layer.name}.bias"])
        elif layer.kind == "relu":
            act = relu(act)
            hidden = act
        elif layer.kind == "softmax":
            logits = act
            act = softmax(act)
    return logits, act, hidden


def forward(spec: ModelSpec, weights: WeightSet, image, capture: bool = False) -> ForwardTrace:
    """Full forward pass; validates the weight set before any compute.

    With ``capture`` the trace also carries the final pool's input
    activation, output features and winner indices (what class-activation
    mapping consumes). Captured or not, logits and probs are identical.
    """
    _require_valid(spec, weights, trainable=None)
    features, pool_input, pool_indices = extract_features(spec, weights, image, capture=True)
    logits, probs, _hidden = head_forward(spec, weights, features)
    if capture:
        return ForwardTrace(logits, probs, pool_input, features, pool_indices)
    return ForwardTrace(logits, probs)
