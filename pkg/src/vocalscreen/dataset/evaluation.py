"""Metrics, subject-level roll-up, timeline annotation and vector export."""

from __future__ import annotations

import csv
import io
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import EmptyPredictions, InvalidLabel, LengthMismatch, ValidationError
from ..features import FeatureMatrix, f_vector, t_vector
from ..io_utils import atomic_write_json, atomic_write_text

THRESHOLD = 0.5


def metrics(preds, labels) -> dict:
    """Binary accuracy/precision/recall/F1; undefined ratios are reported as 0."""
    preds = np.asarray(preds).astype(int).ravel()
    labels = np.asarray(labels).astype(int).ravel()
    if preds.shape != labels.shape:
        raise LengthMismatch(f"{preds.size} predictions vs {labels.size} labels")
    if not np.isin(labels, (0, 1)).all() or not np.isin(preds, (0, 1)).all():
        raise InvalidLabel("predictions and labels must be 0/1")
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    tn = int(np.sum((preds == 0) & (labels == 0)))
    n = tp + fp + fn + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "accuracy": (tp + tn) / n if n else 0.0,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "confusion": [[tn, fp], [fn, tp]],
        "n": n,
    }


def aggregate_subject(preds) -> int:
    """Majority vote of thresholded segment probabilities; ties go to 1.

    Items may be bare probabilities or ``(probability, label)`` pairs.
    """
    preds = list(preds)
    if not preds:
        raise EmptyPredictions("no segment predictions to aggregate")
    probs = [p[0] if isinstance(p, (tuple, list)) else p for p in preds]
    votes = sum(1 for p in probs if p >= THRESHOLD)
    return 1 if 2 * votes >= len(probs) else 0


def subject_level(subject_ids, probs, labels) -> tuple[list[int], list[int], list[str]]:
    """Roll segment probabilities up to one prediction per subject (input order)."""
    grouped: "OrderedDict[str, list]" = OrderedDict()
    truth = {}
    for sid, p, y in zip(subject_ids, probs, labels):
        grouped.setdefault(sid, []).append(float(p))
        truth[sid] = int(y)
    ids = list(grouped)
    return [aggregate_subject(grouped[s]) for s in ids], [truth[s] for s in ids], ids


@dataclass
class Span:
    start_s: float
    end_s: float
    label: int
    probability: float


@dataclass
class AnnotationDoc:
    recording_id: str
    spans: list[Span] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"recording_id": self.recording_id, "spans": [asdict(s) for s in self.spans]}

    def save(self, path) -> Path:
        return atomic_write_json(path, self.to_dict())


def annotate(recording_id: str, offsets, probs, segment_seconds: float = 3.0) -> AnnotationDoc:
    """Lay segment predictions onto the (voiced) recording timeline.

    Contiguous segments with the same predicted label merge into one span
    whose probability is the mean of its members.
    """
    order = np.argsort(np.asarray(offsets, dtype=float), kind="stable")
    spans: list[Span] = []
    counts: list[int] = []
    for i in order:
        start = float(offsets[i])
        p = float(probs[i])
        label = int(p >= THRESHOLD)
        end = start + segment_seconds
        if spans and spans[-1].label == label and abs(spans[-1].end_s - start) < 1e-9:
            last = spans[-1]
            k = counts[-1]
            last.probability = (last.probability * k + p) / (k + 1)
            last.end_s = end
            counts[-1] += 1
        else:
            spans.append(Span(start, end, label, p))
            counts.append(1)
    return AnnotationDoc(recording_id, spans)


def annotation_svg(doc: AnnotationDoc, width: int = 800, height: int = 40) -> str:
    """Two-colour strip: label 0 green, label 1 red."""
    total = max((s.end_s for s in doc.spans), default=1.0) or 1.0
    scale = width / total
    rects = []
    for s in doc.spans:
        colour = "#2e9e44" if s.label == 0 else "#d43b2f"
        rects.append(
            f'<rect x="{s.start_s * scale:.2f}" y="0" width="{(s.end_s - s.start_s) * scale:.2f}" '
            f'height="{height}" fill="{colour}"><title>{s.start_s:.2f}-{s.end_s:.2f}s '
            f'p={s.probability:.3f}</title></rect>'
        )
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n' + "\n".join(rects) + "\n</svg>\n")


def export_vectors(records, matrices, path, axis: str = "F") -> Path:
    """One CSV row per segment: subject_id, label, kind, axis, v0..vN."""
    axis = axis.upper()
    if axis not in ("F", "T"):
        raise ValidationError(f"axis must be 'F' or 'T', got {axis!r}")
    reduce = f_vector if axis == "F" else t_vector
    rows = [reduce(m) for m in matrices]
    width = len(rows[0]) if rows else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject_id", "label", "kind", "axis"] + [f"v{i}" for i in range(width)])
    for rec, m, v in zip(records, matrices, rows):
        kind = m.kind.name if isinstance(m, FeatureMatrix) else ""
        w.writerow([rec.subject_id, rec.label, kind, axis] + [repr(float(x)) for x in v])
    return atomic_write_text(path, buf.getvalue())
