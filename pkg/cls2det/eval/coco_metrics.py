"""
coco_metrics.py - COCO-style AP / AR: greedy matching, 101-point interpolation, size buckets
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from cls2det.utils.geometry import box_areas
from cls2det.utils.logger import get_logger, setup_logger
from .detections import Detections, GroundTruth
from .iou import iou_matrix

setup_logger()
logger = get_logger()

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
AreaRange = Tuple[float, float]


@dataclass
class EvalConfig:
    score_threshold: float = 0.05
    nms_iou: float = 0.5
    max_detections: int = 100
    small_area: float = 12.0 ** 2
    large_area: float = 24.0 ** 2
    error_iou: float = 0.5

    @property
    def area_ranges(self) -> Dict[str, AreaRange]:
        return {"s": (0.0, self.small_area), "m": (self.small_area, self.large_area), "l": (self.large_area, np.inf)}


@dataclass
class CocoMetrics:
    ap_per_threshold: Dict[str, float]
    mAP: float
    AP50: float
    AP75: float
    mAR: float
    AP_small: Optional[float] = None
    AP_medium: Optional[float] = None
    AP_large: Optional[float] = None
    AR_small: Optional[float] = None
    AR_medium: Optional[float] = None
    AR_large: Optional[float] = None
    per_class_ap: Dict[str, Optional[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _in_range(areas: np.ndarray, area_range: Optional[AreaRange]) -> np.ndarray:
    if area_range is None:
        return np.ones(areas.shape, dtype=bool)
    lo, hi = area_range
    return (areas >= lo) & (areas < hi)


def match_class(dets: Sequence[Detections], gts: Sequence[GroundTruth], class_id: int, iou_thresh: float,
                area_range: Optional[AreaRange] = None, max_dets: int = 100):
    """
    Greedy matching of one class over all images.

    Detections are visited by descending score (image order, then list order on ties); each takes the
    unmatched gt of its image with the highest IoU >= iou_thresh, preferring gts inside the area range.
    Returns (scores, tp, ignored, num_gt) where ignored detections neither count as TP nor FP.
    """
    entries = []
    num_gt = 0
    matched_gt = []
    gt_boxes, gt_keep = [], []
    for img, (d, g) in enumerate(zip(dets, gts)):
        d = d.top(max_dets)
        sel = np.flatnonzero(d.labels == class_id)
        for j in sel:
            entries.append((-d.scores[j], img, j, d.boxes[j]))
        gsel = g.boxes[g.labels == class_id]
        keep = _in_range(box_areas(gsel), area_range)
        gt_boxes.append(gsel)
        gt_keep.append(keep)
        matched_gt.append(np.zeros(gsel.shape[0], dtype=bool))
        num_gt += int(keep.sum())
    entries.sort(key=lambda e: (e[0], e[1], e[2]))

    scores = np.array([-e[0] for e in entries], dtype=np.float64)
    tp = np.zeros(len(entries), dtype=bool)
    ignored = np.zeros(len(entries), dtype=bool)
    for n, (_, img, _, box) in enumerate(entries):
        gb = gt_boxes[img]
        best, best_iou = -1, iou_thresh
        if gb.shape[0]:
            ious = iou_matrix(box[None], gb)[0]
            # non-ignored gts first, then ignored ones
            for pass_keep in (True, False):
                for g in np.flatnonzero(gt_keep[img] == pass_keep):
                    if matched_gt[img][g] or ious[g] < best_iou:
                        continue
                    if best >= 0 and ious[g] <= ious[best]:
                        continue
                    best, best_iou = g, ious[g]
                if best >= 0:
                    break
        if best >= 0:
            matched_gt[img][best] = True
            if gt_keep[img][best]:
                tp[n] = True
            else:
                ignored[n] = True
        elif not _in_range(box_areas(box[None]), area_range)[0]:
            ignored[n] = True
    return scores, tp, ignored, num_gt


def interpolated_ap(tp: np.ndarray, num_gt: int) -> float:
    """101-point interpolated area under the precision envelope; tp is in descending-score order."""
    if num_gt == 0:
        raise ValueError("AP undefined without ground truth")
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    recall = ctp / num_gt
    precision = ctp / (ctp + cfp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < recall.size, envelope[np.minimum(idx, recall.size - 1)], 0.0)
    return float(sampled.mean())


def average_precision(dets: Sequence[Detections], gts: Sequence[GroundTruth], class_id: int, iou_thresh: float,
                      area_range: Optional[AreaRange] = None, max_dets: int = 100) -> Optional[float]:
    """AP of one class at one IoU threshold; None when the class has no ground truth."""
    _, tp, ignored, num_gt = match_class(dets, gts, class_id, iou_thresh, area_range, max_dets)
    if num_gt == 0:
        return None
    return interpolated_ap(tp[~ignored], num_gt)


def recall(dets: Sequence[Detections], gts: Sequence[GroundTruth], class_id: int, iou_thresh: float,
           area_range: Optional[AreaRange] = None, max_dets: int = 100) -> Optional[float]:
    _, tp, _, num_gt = match_class(dets, gts, class_id, iou_thresh, area_range, max_dets)
    if num_gt == 0:
        return None
    return float(tp.sum()) / num_gt


def _class_mean(values: List[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def mean_ap_at(dets, gts, num_classes: int, iou_thresh: float, area_range: Optional[AreaRange] = None,
               max_dets: int = 100) -> Optional[float]:
    return _class_mean([average_precision(dets, gts, c, iou_thresh, area_range, max_dets) for c in range(num_classes)])


def _mean_over_thresholds(fn, dets, gts, num_classes, area_range, max_dets) -> Optional[float]:
    per_t = [_class_mean([fn(dets, gts, c, t, area_range, max_dets) for c in range(num_classes)])
             for t in IOU_THRESHOLDS]
    return _class_mean(per_t)


def coco_metrics(dets: Sequence[Detections], gts: Sequence[GroundTruth], num_classes: int,
                 cfg: Optional[EvalConfig] = None) -> CocoMetrics:
    """
    APs at IoU 0.50:0.05:0.95, their mean (mAP), AP50, AP75, mAR at max_detections per image,
    and small / medium / large bucket AP and AR. Classes without ground truth are left out of
    every class mean.
    """
    cfg = cfg or EvalConfig()
    m = cfg.max_detections
    per_t = {}
    for t in IOU_THRESHOLDS:
        v = mean_ap_at(dets, gts, num_classes, t, None, m)
        per_t[f"{t:.2f}"] = 0.0 if v is None else v
    if all(len(g) == 0 for g in gts):
        logger.warning("No ground truth in the evaluation set; every AP is reported as 0")
    mean_ap = float(np.mean(list(per_t.values())))
    mar = _mean_over_thresholds(recall, dets, gts, num_classes, None, m)
    buckets = {}
    for name, rng in cfg.area_ranges.items():
        buckets[f"AP_{name}"] = _mean_over_thresholds(average_precision, dets, gts, num_classes, rng, m)
        buckets[f"AR_{name}"] = _mean_over_thresholds(recall, dets, gts, num_classes, rng, m)
    per_class = {str(c): _class_mean([average_precision(dets, gts, c, t, None, m) for t in IOU_THRESHOLDS])
                 for c in range(num_classes)}
    return CocoMetrics(per_t, mean_ap, per_t["0.50"], per_t["0.75"], 0.0 if mar is None else mar,
                       buckets["AP_s"], buckets["AP_m"], buckets["AP_l"],
                       buckets["AR_s"], buckets["AR_m"], buckets["AR_l"], per_class)
