"""Convert a torchvision VGG-16 checkpoint into the cxrnet weight container.

Output directory layout (the engine's documented container format, see
docs/weights-format.md in the engine repository):

    manifest.json  -- format_version 1, records sorted by tensor name
    tensors.bin    -- raw little-endian float32, row-major, concatenated
    fixture.json   -- seeded random [3,237,237] input plus the source
                      framework's [512,7,7] backbone features (both as
                      base64 of LE float32), for cross-engine parity checks

Conv kernels are exported as [out, in, kh, kw] (torch's native layout,
which is also the container's convention) under block names
``block{i}.conv{j}``. Only the 13 frozen backbone layers are exported;
heads are always trained fresh on the engine side.

Exports are idempotent: the random-init source is seeded, the fixture
input is seeded, and nothing time-dependent is written, so re-running
produces byte-identical files under the same library versions.
"""

import base64
import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
BLOB_NAME = "tensors.bin"
FIXTURE_SEED = 20240613
RANDOM_INIT_SEED = 1337

# torchvision vgg16().features indices of the 13 conv layers, in order,
# paired with the engine's layer names.
NAME_MAP = (
    ("features.0", "block1.conv1"),
    ("features.2", "block1.conv2"),
    ("features.5", "block2.conv1"),
    ("features.7", "block2.conv2"),
    ("features.10", "block3.conv1"),
    ("features.12", "block3.conv2"),
    ("features.14", "block3.conv3"),
    ("features.17", "block4.conv1"),
    ("features.19", "block4.conv2"),
    ("features.21", "block4.conv3"),
    ("features.24", "block5.conv1"),
    ("features.26", "block5.conv2"),
    ("features.28", "block5.conv3"),
)

# expected kernel shapes per block layout (2,2,3,3,3 convs at widths
# 64,128,256,512,512); checked before anything is written
EXPECTED_SHAPES = {}
_in = 3
for _src, _dst in NAME_MAP:
    _out = {"block1": 64, "block2": 128, "block3": 256,
            "block4": 512, "block5": 512}[_dst.split(".")[0]]
    EXPECTED_SHAPES[f"{_dst}.weight"] = (_out, _in, 3, 3)
    EXPECTED_SHAPES[f"{_dst}.bias"] = (_out,)
    _in = _out


class ExportError(RuntimeError):
    pass


def load_source_model(source: str):
    """Build the torchvision VGG-16 for the requested source.

    ``imagenet`` loads the pretrained checkpoint (needs the torch hub
    cache or network access); ``random`` is a seeded fresh initialization,
    useful for parity checks when the checkpoint is unobtainable.
    """
    import torch
    import torchvision

    if source == "imagenet":
        try:
            return torchvision.models.vgg16(
                weights=torchvision.models.VGG16_Weights.IMAGENET1K_V1
            )
        except Exception as exc:  # hub download/cache failures vary by version
            raise ExportError(
                f"cannot obtain the pretrained checkpoint ({exc}); "
                "use --source random for a seeded random backbone"
            ) from exc
    if source == "random":
        torch.manual_seed(RANDOM_INIT_SEED)
        return torchvision.models.vgg16(weights=None)
    raise ExportError(f"unknown source {source!r}; choose 'imagenet' or 'random'")


def collect_backbone_tensors(model) -> dict:
    """Pull the 13 conv weight/bias pairs out of the torch module."""
    state = model.state_dict()
    tensors = {}
    for src, dst in NAME_MAP:
        for part in ("weight", "bias"):
            key = f"{src}.{part}"
            if key not in state:
                raise ExportError(f"source checkpoint is missing tensor {key}")
            array = state[key].detach().cpu().numpy().astype(np.float32)
            expected = EXPECTED_SHAPES[f"{dst}.{part}"]
            if tuple(array.shape) != expected:
                raise ExportError(
                    f"tensor {key} has shape {tuple(array.shape)}, expected {expected}"
                )
            tensors[f"{dst}.{part}"] = array
    return tensors


def compute_fixture(model) -> dict:
    """Seeded input and the source framework's pooled backbone features."""
    import torch

    rng = np.random.default_rng(FIXTURE_SEED)
    image = rng.normal(0.0, 1.0, size=(3, 237, 237)).astype(np.float32)
    with torch.no_grad():
        feats = model.features(torch.from_numpy(image[None]))
    features = feats[0].numpy().astype(np.float32)
    if features.shape != (512, 7, 7):
        raise ExportError(f"backbone features have shape {features.shape}, expected (512, 7, 7)")
    return {
        "seed": FIXTURE_SEED,
        "dtype": "f32le",
        "input_shape": list(image.shape),
        "input_b64": base64.b64encode(image.astype("<f4").tobytes()).decode("ascii"),
        "features_shape": list(features.shape),
        "features_b64": base64.b64encode(features.astype("<f4").tobytes()).decode("ascii"),
    }


def write_container(tensors: dict, out_dir: Path, metadata: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    chunks = []
    offset = 0
    for name in sorted(tensors):
        data = tensors[name].astype("<f4").tobytes()
        records.append({
            "name": name,
            "shape": list(tensors[name].shape),
            "dtype": "f32",
            "file": BLOB_NAME,
            "byte_offset": offset,
        })
        chunks.append(data)
        offset += len(data)
    (out_dir / BLOB_NAME).write_bytes(b"".join(chunks))
    manifest = {"format_version": FORMAT_VERSION, "records": records, "metadata": metadata}
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def export(source: str, out_dir) -> dict:
    """Run the full conversion; returns a small summary dict."""
    import torch
    import torchvision

    out_dir = Path(out_dir)
    model = load_source_model(source)
    model.eval()
    tensors = collect_backbone_tensors(model)
    fixture = compute_fixture(model)
    fixture["source"] = source
    metadata = {
        "source": source,
        "exporter": "vgg16-export",
        "torch_version": torch.__version__,
        "torchvision_version": torchvision.__version__,
    }
    write_container(tensors, out_dir, metadata)
    (out_dir / "fixture.json").write_text(
        json.dumps(fixture, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return {
        "tensors": len(tensors),
        "bytes": sum(t.nbytes for t in tensors.values()),
        "out": str(out_dir),
        "source": source,
    }
