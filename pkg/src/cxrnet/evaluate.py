"""Prediction, confusion matrix, accuracy/recall reporting.

Rows of the confusion matrix are true classes, columns predicted classes,
in the fixed [COVID, NORMAL, INFECTION] order. The predicted label is the
argmax of the probabilities with ties broken toward the lowest class
index. Samples whose preprocessing fails are excluded from the matrix but
listed in the report, so accuracy stays well-defined.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import Sample, preprocess
from .errors import CxrnetError, DatasetError
from .model import CLASS_NAMES, ModelSpec, forward
from .weights import WeightSet


@dataclass(frozen=True)
class Prediction:
    path: str
    true_label: int
    predicted_label: int
    probs: tuple[float, ...]


def predict(spec: ModelSpec, weights: WeightSet, samples: Sequence[Sample],
            image_loader=None) -> tuple[list[Prediction], list[str]]:
    """Classify samples; failures are collected, not fatal."""
    if image_loader is None:
        image_loader = lambda s: preprocess(s.path)
    predictions = []
    failures = []
    for sample in samples:
        try:
            image = image_loader(sample)
        except (DatasetError, OSError) as exc:
            failures.append(f"{sample.path}: {exc}")
            continue
        trace = forward(spec, weights, image)
        predicted = int(np.argmax(trace.probs))  # first max wins ties
        predictions.append(Prediction(
            str(sample.path), sample.label, predicted,
            tuple(float(p) for p in trace.probs),
        ))
    return predictions, failures


def confusion(pairs: Iterable[tuple[int, int]], num_classes: int = len(CLASS_NAMES)) -> np.ndarray:
    """Accumulate (true, predicted) pairs into a [k,k] count matrix."""
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    for true, pred in pairs:
        if not (0 <= true < num_classes and 0 <= pred < num_classes):
            raise DatasetError(
                f"label pair ({true}, {pred}) out of range for {num_classes} classes"
            )
        matrix[true, pred] += 1
    return matrix


@dataclass
class EvalReport:
    accuracy: float | None
    recalls: dict = field(default_factory=dict)  # class name -> recall; undefined rows absent
    matrix: np.ndarray = None
    total: int = 0
    class_names: tuple = CLASS_NAMES
    misclassified: list = field(default_factory=list)
    failed: list = field(default_factory=list)


def summarize(matrix: np.ndarray, class_names=CLASS_NAMES,
              misclassified: Sequence[str] = (), failed: Sequence[str] = ()) -> EvalReport:
    """accuracy = trace/total; recall_i = matrix[i,i] / rowsum_i (rows with
    no samples are omitted rather than reported as 0)."""
    matrix = np.asarray(matrix, dtype=np.int64)
    k = matrix.shape[0]
    if matrix.shape != (k, k) or k != len(class_names):
        raise CxrnetError(
            f"matrix shape {matrix.shape} does not match {len(class_names)} classes"
        )
    total = int(matrix.sum())
    accuracy = float(np.trace(matrix) / total) if total else None
    recalls = {}
    for i, name in enumerate(class_names):
        row = int(matrix[i].sum())
        if row:
            recalls[name] = float(matrix[i, i] / row)
    return EvalReport(accuracy, recalls, matrix, total, tuple(class_names),
                      list(misclassified), list(failed))


def report_to_dict(report: EvalReport) -> dict:
    return {
        "accuracy": report.accuracy,
        "recalls": report.recalls,
        "matrix": report.matrix.tolist(),
        "total": report.total,
        "class_names": list(report.class_names),
        "misclassified": list(report.misclassified),
        "failed": list(report.failed),
    }


def report_from_dict(doc: dict) -> EvalReport:
    return EvalReport(
        doc["accuracy"],
        dict(doc["recalls"]),
        np.asarray(doc["matrix"], dtype=np.int64),
        int(doc["total"]),
        tuple(doc["class_names"]),
        list(doc["misclassified"]),
        list(doc["failed"]),
    )


def save_report(report: EvalReport, path) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_report(path) -> EvalReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def format_report(report: EvalReport) -> str:
    """Aligned text table plus accuracy, recalls and misclassified paths."""
    names = report.class_names
    width = max(len(n) for n in names) + 6
    header = " " * width + "".join(f"{'pred ' + n:>{width}}" for n in names)
    lines = [header]
    for i, name in enumerate(names):
        cells = "".join(f"{int(v):>{width}}" for v in report.matrix[i])
        lines.append(f"{'true ' + name:<{width}}" + cells)
    lines.append("")
    lines.append(f"samples evaluated: {report.total}")
    if report.accuracy is not None:
        lines.append(f"accuracy: {report.accuracy:.4f}")
    for name in names:
        if name in report.recalls:
            lines.append(f"recall[{name}]: {report.recalls[name]:.4f}")
    if report.misclassified:
        lines.append("")
        lines.append("misclassified:")
        lines.extend(report.misclassified)
    if report.failed:
        lines.append("")
        lines.append("failed to preprocess:")
        lines.extend(report.failed)
    return "\n".join(lines) + "\n"
