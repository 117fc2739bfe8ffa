"""
detections.py - Per-image prediction and annotation records, and greedy per-class NMS
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .iou import iou_matrix


def _boxes(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64).reshape(-1, 4)


@dataclass
class Detections:
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.boxes = _boxes(self.boxes)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)

    def __len__(self):
        return int(self.labels.shape[0])

    def select(self, idx) -> "Detections":
        idx = np.asarray(idx, dtype=np.int64)
        return Detections(self.boxes[idx], self.labels[idx], self.scores[idx])

    def sorted(self) -> "Detections":
        """Descending score; equal scores keep their order."""
        return self.select(np.argsort(-self.scores, kind="stable"))

    def top(self, k: int) -> "Detections":
        return self.sorted().select(np.arange(min(k, len(self))))

    def to_records(self) -> List[dict]:
        return [{"box": [float(v) for v in b], "label": int(l), "score": float(s)}
                for b, l, s in zip(self.boxes, self.labels, self.scores)]


@dataclass
class GroundTruth:
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.boxes = _boxes(self.boxes)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)

    def __len__(self):
        return int(self.labels.shape[0])

    def select(self, idx) -> "GroundTruth":
        idx = np.asarray(idx, dtype=np.int64)
        return GroundTruth(self.boxes[idx], self.labels[idx])


def nms(dets: Detections, iou_thresh: float = 0.5) -> Detections:
    """Greedy by descending score within each class; a box is dropped when IoU > iou_thresh with a kept one."""
    ordered = dets.sorted()
    keep = []
    suppressed = np.zeros(len(ordered), dtype=bool)
    ious = iou_matrix(ordered.boxes, ordered.boxes)
    for i in range(len(ordered)):
        if suppressed[i]:
            continue
        keep.append(i)
        same = ordered.labels == ordered.labels[i]
        later = np.arange(len(ordered)) > i
        suppressed |= same & later & (ious[i] > iou_thresh)
    return ordered.select(keep)
