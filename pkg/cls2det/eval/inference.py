"""
inference.py - Student detector inference: scores per (anchor, class), decoded boxes, NMS, evaluation
"""

from typing import List, Optional, Tuple

import numpy as np

from cls2det.diffmath import ops
from cls2det.diffmath.tensor import DiffTensor, no_grad
from cls2det.distill.kd_cls import CATEGORICAL
from cls2det.models.anchors import decode_boxes
from cls2det.models.student import StudentDetector
from cls2det.utils.logger import get_logger, setup_logger
from .coco_metrics import CocoMetrics, EvalConfig, coco_metrics
from .detections import Detections, GroundTruth, nms

setup_logger()
logger = get_logger()


def class_scores(model: StudentDetector, cls_logits: np.ndarray) -> np.ndarray:
    """[A, C] per-class confidences: softmax without the background column, or sigmoid."""
    z = DiffTensor(cls_logits)
    if model.head_kind == CATEGORICAL:
        return ops.softmax_t(z, 1.0).data[:, :model.num_classes]
    return ops.sigmoid_t(z, 1.0).data


def postprocess(model: StudentDetector, cls_logits: np.ndarray, offsets: np.ndarray,
                cfg: Optional[EvalConfig] = None) -> Detections:
    cfg = cfg or EvalConfig()
    scores = class_scores(model, cls_logits)
    boxes = decode_boxes(model.anchors, DiffTensor(offsets)).data
    size = float(model.image_size)
    boxes = np.clip(boxes, 0.0, size)
    anchor_idx, labels = np.nonzero(scores > cfg.score_threshold)
    cand = boxes[anchor_idx]
    ok = (cand[:, 2] > cand[:, 0]) & (cand[:, 3] > cand[:, 1])
    dets = Detections(cand[ok], labels[ok], scores[anchor_idx, labels][ok])
    return nms(dets, cfg.nms_iou).top(cfg.max_detections)


def predict(model: StudentDetector, images: np.ndarray, cfg: Optional[EvalConfig] = None,
            batch_size: int = 32) -> List[Detections]:
    out = []
    with no_grad():
        for start in range(0, images.shape[0], batch_size):
            cls_logits, offsets = model.forward(DiffTensor(images[start:start + batch_size]))
            for b in range(cls_logits.shape[0]):
                out.append(postprocess(model, cls_logits.data[b], offsets.data[b], cfg))
    return out


def ground_truth(annotations) -> List[GroundTruth]:
    return [GroundTruth(a.boxes, a.labels) for a in annotations]


def evaluate_model(model: StudentDetector, dataset, cfg: Optional[EvalConfig] = None
                   ) -> Tuple[CocoMetrics, List[Detections], List[GroundTruth]]:
    cfg = cfg or EvalConfig()
    dets = predict(model, dataset.images, cfg)
    gts = ground_truth(dataset.annotations)
    metrics = coco_metrics(dets, gts, model.num_classes, cfg)
    logger.debug(f"evaluated {len(dets)} images: mAP {metrics.mAP:.4f}")
    return metrics, dets, gts
