"""Gradient-weighted class activation maps and overlay rendering.

The class score is the pre-softmax logit of the target class. Its
gradient is pushed back through the head (final dense -> ReLU -> first
dense -> flatten) and through the recorded winner indices of the final
max pool, landing on the last conv activation A (post-ReLU, the input of
that pool). Channel weights are the spatial means of that gradient; the
raw map is ReLU(sum_k alpha_k * A_k), upsampled bilinearly to the input
resolution and divided by its own maximum (an all-zero map stays zero),
so heatmap values always lie in [0, 1].
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError
from .model import ModelSpec, forward
from .tensor import (
    bilinear_resize,
    dense,
    dense_vjp,
    maxpool2d_backward,
    relu,
    relu_mask,
)
from .weights import WeightSet

# Piecewise-linear colormap anchors: position -> RGB.
COLORMAP_ANCHORS = (
    (0.00, (0, 0, 64)),
    (0.25, (0, 0, 255)),
    (0.50, (0, 255, 0)),
    (0.75, (255, 255, 0)),
    (1.00, (255, 0, 0)),
)


@dataclass(frozen=True)
class CamResult:
    class_index: int
    alpha: np.ndarray          # per-channel weights
    raw_map: np.ndarray        # ReLU'd weighted activation sum, pool-input resolution
    heatmap: np.ndarray        # [H,W] in [0,1] at input resolution
    predicted_probs: np.ndarray


def grad_cam(spec: ModelSpec, weights: WeightSet, image,
             target_class: int | None = None) -> CamResult:
    """Class-activation map for ``target_class`` (default: predicted class)."""
    trace = forward(spec, weights, image, capture=True)
    k = spec.num_classes
    if target_class is None:
        target = int(np.argmax(trace.probs))
    else:
        target = int(target_class)
        if not 0 <= target < k:
            raise ConfigError(f"target class {target} out of range for {k} classes")

    fc1, fc2 = [l for l in spec.head_layers() if l.kind == "dense"]
    w1, b1 = weights[f"{fc1.name}.weight"], weights[f"{fc1.name}.bias"]
    w2 = weights[f"{fc2.name}.weight"]

    x = trace.backbone_features.reshape(-1)
    h_pre = dense(x, w1, b1)
    hidden = relu(h_pre)

    seed = np.zeros(k, dtype=np.float32)
    seed[target] = 1.0
    _, _, d_hidden = dense_vjp(hidden, w2, seed)
    d_hpre = d_hidden * relu_mask(h_pre)
    _, _, d_x = dense_vjp(x, w1, d_hpre)
    d_features = d_x.reshape(trace.backbone_features.shape)
    d_act = maxpool2d_backward(d_features, trace.pool_indices,
                               trace.last_conv_activation.shape)

    alpha = d_act.mean(axis=(1, 2), dtype=np.float64).astype(np.float32)
    weighted = (alpha.astype(np.float64)[:, None, None]
                * trace.last_conv_activation.astype(np.float64)).sum(axis=0)
    raw_map = relu(weighted.astype(np.float32))

    heatmap = bilinear_resize(raw_map[None], spec.input_shape[1], spec.input_shape[2])[0]
    peak = float(heatmap.max())
    if peak > 0:
        heatmap = heatmap / np.float32(peak)
    return CamResult(target, alpha, raw_map, heatmap, trace.probs)


def heatmap_to_rgb(heatmap) -> np.ndarray:
    """Map [0,1] intensities through the anchored colormap to [3,H,W] 0..255."""
    t = np.clip(np.asarray(heatmap, dtype=np.float64), 0.0, 1.0)
    xp = [a for a, _ in COLORMAP_ANCHORS]
    out = np.empty((3,) + t.shape, dtype=np.float64)
    for ch in range(3):
        fp = [rgb[ch] for _, rgb in COLORMAP_ANCHORS]
        out[ch] = np.interp(t, xp, fp)
    return out


def render_overlay(heatmap, original, out_path, alpha: float = 0.4) -> None:
    """Blend the colormapped heatmap over the original and write a PNG.

    ``original`` is a [3,H,W] tensor of [0,1] intensities (the resized,
    un-normalized image). Blend: (1-alpha)*original + alpha*colormap,
    rounded once to 8 bits; PNG is lossless, so a decode returns exactly
    those bytes.
    """
    original = np.asarray(original, dtype=np.float64)
    cmap = heatmap_to_rgb(heatmap)
    if original.shape != cmap.shape:
        raise ConfigError(
            f"overlay shapes disagree: image {original.shape}, heatmap {cmap.shape}"
        )
    blended = (1.0 - alpha) * (original * 255.0) + alpha * cmap
    u8 = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0), mode="RGB").save(Path(out_path), format="PNG")


def write_cam_outputs(result: CamResult, original, out_dir, stem: str,
                      class_names) -> list[Path]:
    """Write the per-image artifact set: overlay PNG, raw map CSV, summary JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    png = out_dir / f"{stem}.cam.png"
    csv = out_dir / f"{stem}.cam.csv"
    meta = out_dir / f"{stem}.json"

    render_overlay(result.heatmap, original, png)
    np.savetxt(csv, result.raw_map, fmt="%.9g", delimiter=",")
    alpha = result.alpha.astype(np.float64)
    meta.write_text(json.dumps({
        "class_index": result.class_index,
        "class_name": class_names[result.class_index],
        "probs": [float(p) for p in result.predicted_probs],
        "alpha": {
            "min": float(alpha.min()),
            "max": float(alpha.max()),
            "mean": float(alpha.mean()),
            "l1": float(np.abs(alpha).sum()),
        },
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return [png, csv, meta]
