import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))  # for `import oracles`

from cxrnet.model import build_cnn


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    """Two tiny conv blocks over 21x21 inputs: cheap enough for loops."""
    return build_cnn((4, 6), (1, 1), num_classes=3, hidden=8, input_size=21)


def write_gray_png(path, array01):
    """array01: [H,W] floats in [0,1] -> 8-bit grayscale PNG."""
    u8 = np.rint(np.clip(array01, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(u8, mode="L").save(path)


def tiny_corpus(root, per_class=4, size=24, seed=0):
    """Minimal covid/normal/infection PNG corpus with distinct textures."""
    rng = np.random.default_rng(seed)
    root = Path(root)
    yy, xx = np.mgrid[0:size, 0:size] / size
    for label, cname in enumerate(("covid", "normal", "infection")):
        cdir = root / cname
        cdir.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            phase = rng.uniform(0, 2 * np.pi)
            if label == 0:
                img = 0.5 + 0.45 * np.sin(2 * np.pi * 5 * yy + phase)
            elif label == 1:
                img = 0.5 + 0.45 * np.sin(2 * np.pi * 5 * xx + phase)
            else:
                img = 0.5 + 0.45 * np.sin(2 * np.pi * 5 * xx + phase) * \
                    np.sin(2 * np.pi * 5 * yy + phase)
            write_gray_png(cdir / f"{cname}_{i:03d}.png", img)
    return root
