"""Synthetic texture corpus and random backbone weights.

Real chest X-ray corpora cannot ship with the repository, so end-to-end
runs use three procedurally distinct grayscale textures (horizontal
waves, vertical waves, checker blobs) laid out exactly like a real
dataset: ``<root>/{covid,normal,infection}/*.png``. Frequencies, phases
and additive noise are jittered per image from one seeded generator.

``random_backbone`` draws He-scaled conv weights for any model spec; a
frozen random feature extractor is enough to make these textures linearly
separable, which is what the training-loop checks need.
"""

import math
from pathlib import Path

import numpy as np
from PIL import Image

from .data import CLASS_DIRS
from .model import ModelSpec
from .weights import WeightSet


def _texture(label: int, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    freq = rng.uniform(6.0, 11.0)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    if label == 0:
        base = np.sin(2.0 * math.pi * freq * yy + phase)
    elif label == 1:
        base = np.sin(2.0 * math.pi * freq * xx + phase)
    else:
        base = np.sin(2.0 * math.pi * freq * xx + phase) * \
               np.sin(2.0 * math.pi * freq * yy + phase)
    img = 0.5 + 0.4 * base + rng.normal(0.0, 0.06, (size, size))
    return np.clip(img, 0.0, 1.0)


def make_corpus(root, counts=(175, 100, 100), size: int = 96, seed: int = 0) -> dict:
    """Write a class-labeled PNG corpus; returns {class_dir: count}."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    written = {}
    for label, cname in enumerate(CLASS_DIRS):
        cdir = root / cname
        cdir.mkdir(parents=True, exist_ok=True)
        for i in range(counts[label]):
            img = _texture(label, size, rng)
            u8 = np.rint(img * 255.0).astype(np.uint8)
            Image.fromarray(u8, mode="L").save(cdir / f"{cname}_{i:04d}.png")
        written[cname] = counts[label]
    return written


def random_backbone(spec: ModelSpec, seed: int = 0) -> WeightSet:
    """Seeded He-normal conv kernels and zero biases for the frozen layers."""
    rng = np.random.default_rng(seed)
    out: WeightSet = {}
    for name, shape in spec.required_tensors(trainable=False).items():
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:]))
            out[name] = rng.normal(0.0, math.sqrt(2.0 / fan_in), shape).astype(np.float32)
        else:
            out[name] = np.zeros(shape, dtype=np.float32)
    return out
