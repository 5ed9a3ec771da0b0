"""Weight container: a manifest plus raw little-endian float32 blobs.

Layout of a container directory::

    <container>/
      manifest.json   # format_version, tensor records, free-form metadata
      tensors.bin     # (one or more .bin files) raw LE IEEE-754 binary32,
                      # row-major, no per-tensor header

Each manifest record carries ``name``, ``shape``, ``dtype`` (always
"f32"), ``file`` (blob path relative to the container) and
``byte_offset``. Conv kernels are stored [out, in, kh, kw] and dense
weights [out, in]; see docs/weights-format.md for the layer-name to
tensor-name mapping. Save followed by load reproduces every tensor
bit-exactly, and saving never injects timestamps, so containers written
from the same tensors are byte-identical.
"""

import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    FormatVersionError,
    ManifestError,
    ManifestMissingError,
    MissingBlobError,
    NonFiniteWeightError,
    TruncatedBlobError,
)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
_BLOB_NAME = "tensors.bin"

# A weight set is a plain mapping from tensor name to float32 ndarray.
WeightSet = dict


@dataclass(frozen=True)
class TensorRecord:
    name: str
    shape: tuple[int, ...]
    dtype: str
    file: str
    byte_offset: int

    def nbytes(self) -> int:
        n = 1
        for extent in self.shape:
            n *= extent
        return 4 * n


@dataclass
class WeightManifest:
    format_version: int
    records: list[TensorRecord]
    metadata: dict = field(default_factory=dict)


def _parse_record(obj) -> TensorRecord:
    try:
        name = obj["name"]
        shape = tuple(int(n) for n in obj["shape"])
        dtype = obj["dtype"]
        file = obj["file"]
        offset = int(obj["byte_offset"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"malformed tensor record {obj!r}: {exc}") from exc
    if dtype != "f32":
        raise ManifestError(f"tensor {name!r} has unsupported dtype {dtype!r}")
    if any(n < 1 for n in shape):
        raise ManifestError(f"tensor {name!r} has non-positive extent in shape {shape}")
    if offset < 0:
        raise ManifestError(f"tensor {name!r} has negative byte_offset {offset}")
    return TensorRecord(name, shape, dtype, file, offset)


def read_manifest(path) -> WeightManifest:
    """Parse and validate manifest.json from a container directory."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise ManifestMissingError(f"no {MANIFEST_NAME} in {path}")
    try:
        raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot parse {manifest_path}: {exc}") from exc
    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(
            f"{manifest_path} has format_version {version!r}, expected {FORMAT_VERSION}"
        )
    records = [_parse_record(r) for r in raw.get("records", [])]
    names = [r.name for r in records]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ManifestError(f"duplicate tensor names in manifest: {dupes}")
    metadata = raw.get("metadata", {})
    if not isinstance(metadata, dict):
        raise ManifestError("manifest metadata must be an object")
    return WeightManifest(version, records, metadata)


def load_container(path) -> WeightSet:
    """Load every tensor of a container into a name -> float32 array map."""
    path = Path(path)
    manifest = read_manifest(path)
    blobs: dict[str, bytes] = {}
    out: WeightSet = {}
    for rec in manifest.records:
        if rec.file not in blobs:
            blob_path = path / rec.file
            if not blob_path.is_file():
                raise MissingBlobError(f"tensor {rec.name!r}: missing blob {blob_path}")
            blobs[rec.file] = blob_path.read_bytes()
        blob = blobs[rec.file]
        end = rec.byte_offset + rec.nbytes()
        if end > len(blob):
            raise TruncatedBlobError(
                f"tensor {rec.name!r} needs bytes [{rec.byte_offset}, {end}) of "
                f"{rec.file}, which has only {len(blob)} bytes"
            )
        flat = np.frombuffer(blob, dtype="<f4", count=rec.nbytes() // 4,
                             offset=rec.byte_offset)
        tensor = flat.reshape(rec.shape).astype(np.float32)  # copy; native order
        if not np.isfinite(tensor).all():
            raise NonFiniteWeightError(f"tensor {rec.name!r} contains NaN or Inf")
        out[rec.name] = tensor
    return out


def save_container(weights: WeightSet, path, metadata: dict | None = None) -> WeightManifest:
    """Write a weight set as a container directory, replacing any existing one.

    Files are staged in a sibling temp directory and swapped in by rename,
    so a reader never sees a half-written manifest. Records are sorted by
    name and packed into a single blob; output bytes depend only on the
    tensors and metadata passed in.
    """
    path = Path(path)
    records = []
    chunks = []
    offset = 0
    for name in sorted(weights):
        tensor = np.ascontiguousarray(weights[name], dtype=np.float32)
        data = tensor.astype("<f4").tobytes()
        records.append(TensorRecord(name, tensor.shape, "f32", _BLOB_NAME, offset))
        chunks.append(data)
        offset += len(data)
    manifest = WeightManifest(FORMAT_VERSION, records, dict(metadata or {}))

    doc = {
        "format_version": manifest.format_version,
        "records": [
            {
                "name": r.name,
                "shape": list(r.shape),
                "dtype": r.dtype,
                "file": r.file,
                "byte_offset": r.byte_offset,
            }
            for r in manifest.records
        ],
        "metadata": manifest.metadata,
    }

    path.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=path.name + ".", dir=path.parent))
    try:
        (staging / _BLOB_NAME).write_bytes(b"".join(chunks))
        (staging / MANIFEST_NAME).write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        if path.exists():
            shutil.rmtree(path)
        os.rename(staging, path)
    except OSError as exc:
        shutil.rmtree(staging, ignore_errors=True)
        raise ManifestError(f"cannot write container {path}: {exc}") from exc
    return manifest


@dataclass
class ValidationReport:
    passed: bool
    problems: list[str]
    warnings: list[str]
    checked: list[str]

    def describe(self) -> str:
        lines = [f"weight validation {'passed' if self.passed else 'FAILED'}"]
        lines += [f"  problem: {p}" for p in self.problems]
        lines += [f"  warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def validate_against(spec, weights: WeightSet, trainable: bool | None = None) -> ValidationReport:
    """Check that ``weights`` provides the tensors ``spec`` requires.

    ``trainable`` narrows the check: False for frozen (backbone) tensors
    only, True for trainable (head) tensors only, None for everything.
    Surplus tensors are warnings, never failures.
    """
    required = spec.required_tensors(trainable=trainable)
    problems = []
    checked = []
    for name, shape in required.items():
        checked.append(name)
        if name not in weights:
            problems.append(f"missing tensor {name!r} (shape {shape})")
            continue
        got = tuple(weights[name].shape)
        if got != shape:
            problems.append(f"tensor {name!r} has shape {got}, expected {shape}")
    warnings = [
        f"surplus tensor {name!r} not required by the model"
        for name in sorted(set(weights) - set(required))
    ]
    return ValidationReport(not problems, problems, warnings, checked)
