"""
error_analysis.py - Six-way false-positive taxonomy and the mAP gained by fixing each error type

Each detection of an image, visited by descending score, is exactly one of
    true_positive   right class, IoU >= t with a not-yet-matched gt
    duplicate       right class, IoU >= t, but that gt is already matched
    classification  wrong class, IoU >= t
    localization    right class, 0.1 <= IoU < t
    both            wrong class, 0.1 <= IoU < t
    background      IoU < 0.1 with every gt
Ground truths without a true positive and not targeted by a classification, localization or
both error are missed.
"""

from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from cls2det.utils.logger import get_logger, setup_logger
from .coco_metrics import mean_ap_at
from .detections import Detections, GroundTruth
from .iou import iou_matrix

setup_logger()
logger = get_logger()

BACKGROUND_IOU = 0.1
ERROR_TYPES = ("classification", "localization", "both", "duplicate", "background", "missed")
TRUE_POSITIVE = "true_positive"
SWEEP_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(9))


@dataclass
class ImageErrors:
    """Per-detection type (in the image's original detection order) and the gt each error points at."""
    types: List[str]
    targets: List[int]
    missed: List[int]


@dataclass
class ErrorReport:
    fg_iou: float
    counts: Dict[str, int]
    delta_map: Dict[str, float]
    base_map: float
    num_detections: int
    num_true_positives: int

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def false_positive_count(self) -> int:
        return sum(self.counts[t] for t in ERROR_TYPES if t != "missed")


def classify_image(dets: Detections, gt: GroundTruth, fg_iou: float) -> ImageErrors:
    order = np.argsort(-dets.scores, kind="stable")
    ious = iou_matrix(dets.boxes, gt.boxes)
    matched = np.zeros(len(gt), dtype=bool)
    types = [""] * len(dets)
    targets = [-1] * len(dets)
    for i in order:
        row = ious[i] if len(gt) else np.zeros(0)
        same = gt.labels == dets.labels[i]
        same_iou = np.where(same, row, -1.0)
        other_iou = np.where(~same, row, -1.0)
        free = np.where(same & ~matched, row, -1.0)
        if free.size and free.max() >= fg_iou:
            g = int(free.argmax())
            matched[g] = True
            types[i], targets[i] = TRUE_POSITIVE, g
        elif same_iou.size and same_iou.max() >= fg_iou:
            types[i], targets[i] = "duplicate", int(same_iou.argmax())
        elif other_iou.size and other_iou.max() >= fg_iou:
            types[i], targets[i] = "classification", int(other_iou.argmax())
        elif same_iou.size and same_iou.max() >= BACKGROUND_IOU:
            types[i], targets[i] = "localization", int(same_iou.argmax())
        elif other_iou.size and other_iou.max() >= BACKGROUND_IOU:
            types[i], targets[i] = "both", int(other_iou.argmax())
        else:
            types[i] = "background"
    covered = set(np.flatnonzero(matched).tolist())
    covered |= {t for ty, t in zip(types, targets) if ty in ("classification", "localization", "both")}
    missed = [g for g in range(len(gt)) if g not in covered]
    return ImageErrors(types, targets, missed)


def _fixed(dets: Sequence[Detections], gts: Sequence[GroundTruth], per_image: Sequence[ImageErrors],
           error_type: str) -> Tuple[List[Detections], List[GroundTruth]]:
    """Oracle correction of one error type."""
    new_dets, new_gts = [], []
    for d, g, e in zip(dets, gts, per_image):
        if error_type == "missed":
            missed = set(e.missed)
            keep = [i for i in range(len(g)) if i not in missed]
            new_dets.append(d)
            new_gts.append(g.select(keep))
            continue
        boxes = d.boxes.copy()
        labels = d.labels.copy()
        keep = []
        for i, (ty, t) in enumerate(zip(e.types, e.targets)):
            if ty == error_type:
                if ty == "classification":
                    labels[i] = g.labels[t]
                elif ty == "localization":
                    boxes[i] = g.boxes[t]
                else:
                    continue
            keep.append(i)
        new_dets.append(Detections(boxes, labels, d.scores).select(keep))
        new_gts.append(g)
    return new_dets, new_gts


def error_decomposition(dets: Sequence[Detections], gts: Sequence[GroundTruth], fg_iou_thresh: float,
                        num_classes: Optional[int] = None, max_dets: int = 100) -> ErrorReport:
    """Type counts at one foreground IoU and the mAP@fg_iou gained by oracle-fixing each type."""
    if num_classes is None:
        labels = [l for d in dets for l in d.labels] + [l for g in gts for l in g.labels]
        num_classes = int(max(labels)) + 1 if labels else 1
    dets = [d.top(max_dets) for d in dets]
    per_image = [classify_image(d, g, fg_iou_thresh) for d, g in zip(dets, gts)]
    counts = {t: 0 for t in ERROR_TYPES}
    tp = 0
    for e in per_image:
        for ty in e.types:
            if ty == TRUE_POSITIVE:
                tp += 1
            else:
                counts[ty] += 1
        counts["missed"] += len(e.missed)

    def score(d, g) -> float:
        v = mean_ap_at(d, g, num_classes, fg_iou_thresh, None, max_dets)
        return 0.0 if v is None else v

    base = score(dets, gts)
    delta = {}
    for ty in ERROR_TYPES:
        if counts[ty] == 0:
            delta[ty] = 0.0
            continue
        fd, fg = _fixed(dets, gts, per_image, ty)
        delta[ty] = score(fd, fg) - base
    num = sum(len(d) for d in dets)
    report = ErrorReport(float(fg_iou_thresh), counts, delta, base, num, tp)
    logger.debug(f"error decomposition at IoU {fg_iou_thresh:.2f}: {counts}")
    return report


def error_sweep(dets, gts, num_classes: Optional[int] = None,
                thresholds: Sequence[float] = SWEEP_THRESHOLDS, max_dets: int = 100) -> List[ErrorReport]:
    return [error_decomposition(dets, gts, t, num_classes, max_dets) for t in thresholds]


def error_table(reports: Sequence[ErrorReport]) -> pd.DataFrame:
    """Long-form table (fg_iou, error_type, count, delta_mAP), one row per threshold and type."""
    rows = [{"fg_iou": r.fg_iou, "error_type": ty, "count": r.counts[ty], "delta_mAP": r.delta_map[ty]}
            for r in reports for ty in ERROR_TYPES]
    return pd.DataFrame(rows, columns=["fg_iou", "error_type", "count", "delta_mAP"])
