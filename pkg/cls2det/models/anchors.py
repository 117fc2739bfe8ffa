"""
anchors.py - Anchor grid, max-IoU anchor assignment and the box offset parameterization
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from cls2det.diffmath import ops
from cls2det.diffmath.tensor import DiffTensor
from cls2det.errors import ConfigError, ShapeError
from cls2det.eval.iou import iou_matrix
from cls2det.utils.geometry import BoundingBox, array_to_boxes
from cls2det.utils.logger import get_logger, setup_logger

setup_logger()
logger = get_logger()

OFFSET_CLAMP = 4.0


@dataclass
class AnchorAssignment:
    """
    Per-anchor matching of one image.

    positive_indices are the K positives; matched_gt[i] is the ground-truth index of
    positive i. forced marks positives that only come from their gt's best-anchor match
    (their IoU may be below the positive threshold).
    """
    positive_indices: np.ndarray
    matched_gt: np.ndarray
    matched_boxes: np.ndarray
    matched_labels: np.ndarray
    negative_indices: np.ndarray
    forced: np.ndarray
    num_anchors: int

    @property
    def num_positives(self) -> int:
        return int(self.positive_indices.shape[0])

    @property
    def ignored_indices(self) -> np.ndarray:
        taken = np.zeros(self.num_anchors, dtype=bool)
        taken[self.positive_indices] = True
        taken[self.negative_indices] = True
        return np.flatnonzero(~taken)


def anchor_array(image_size: int, grid_stride: int, scales: Sequence[float], ratios: Sequence[float]) -> np.ndarray:
    """[A, 4] anchors enumerated row-major over (row, col, scale, ratio)."""
    if grid_stride <= 0 or image_size % grid_stride:
        raise ConfigError(f"anchor stride {grid_stride} must divide image size {image_size}")
    cells = image_size // grid_stride
    rows = []
    for r in range(cells):
        cy = (r + 0.5) * grid_stride
        for c in range(cells):
            cx = (c + 0.5) * grid_stride
            for s in scales:
                for ratio in ratios:
                    w = s * np.sqrt(ratio)
                    h = s / np.sqrt(ratio)
                    rows.append((cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2))
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def generate_anchors(image_size: int, grid_stride: int, scales: Sequence[float], ratios: Sequence[float]) -> List[BoundingBox]:
    return array_to_boxes(anchor_array(image_size, grid_stride, scales, ratios))


def assign_anchors(anchors: np.ndarray, gt_boxes: np.ndarray, gt_labels: np.ndarray,
                   pos_thresh: float = 0.5, neg_thresh: float = 0.4) -> AnchorAssignment:
    """
    Max-IoU matching. Each anchor takes its best ground truth (first gt on ties);
    IoU >= pos_thresh is positive, < neg_thresh negative, the band in between ignored.
    Each gt also claims its single best anchor when that IoU is > 0; a claimed anchor
    is not taken over by a later gt.
    """
    if not 0.0 <= neg_thresh <= pos_thresh <= 1.0:
        raise ConfigError(f"need 0 <= neg_thresh <= pos_thresh <= 1, got {neg_thresh}, {pos_thresh}")
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    gt_labels = np.asarray(gt_labels, dtype=np.int64).reshape(-1)
    n = anchors.shape[0]
    empty = np.zeros(0, dtype=np.int64)
    if gt_boxes.shape[0] == 0:
        return AnchorAssignment(empty, empty, np.zeros((0, 4)), empty, np.arange(n), np.zeros(0, dtype=bool), n)

    ious = iou_matrix(anchors, gt_boxes)
    best_gt = ious.argmax(axis=1)
    best_iou = ious[np.arange(n), best_gt]
    positive = best_iou >= pos_thresh
    forced = np.zeros(n, dtype=bool)
    for g in range(gt_boxes.shape[0]):
        a = int(ious[:, g].argmax())
        if ious[a, g] <= 0 or forced[a]:
            continue
        forced[a] = True
        best_gt[a] = g
    negative = (best_iou < neg_thresh) & ~forced
    forced_only = forced & ~positive
    positive = positive | forced

    pos = np.flatnonzero(positive)
    matched = best_gt[pos]
    return AnchorAssignment(pos, matched, gt_boxes[matched], gt_labels[matched],
                            np.flatnonzero(negative), forced_only[pos], n)


def _centers(boxes: np.ndarray):
    w = boxes[:, 2] - boxes[:, 0]
    h = boxes[:, 3] - boxes[:, 1]
    return boxes[:, 0] + 0.5 * w, boxes[:, 1] + 0.5 * h, w, h


def encode_boxes(anchors: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Regression targets (tx, ty, tw, th) of boxes relative to anchors."""
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 4)
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    acx, acy, aw, ah = _centers(anchors)
    cx, cy, w, h = _centers(boxes)
    return np.stack([(cx - acx) / aw, (cy - acy) / ah, np.log(w / aw), np.log(h / ah)], axis=1)


def decode_boxes(anchors: np.ndarray, offsets: DiffTensor) -> DiffTensor:
    """
    Corner boxes [A, 4] from anchors and offsets [A, 4], differentiable in the offsets:
    cx = acx + tx aw, cy = acy + ty ah, w = aw exp(tw), h = ah exp(th).
    tw and th are clamped to +-4 before the exponential.
    """
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 4)
    if offsets.ndim != 2 or offsets.shape != anchors.shape:
        raise ShapeError(f"offsets {offsets.shape} do not match anchors {anchors.shape}")
    acx, acy, aw, ah = (DiffTensor(v) for v in _centers(anchors))
    cx = ops.add(acx, ops.mul(offsets[:, 0], aw))
    cy = ops.add(acy, ops.mul(offsets[:, 1], ah))
    half_w = ops.mul(ops.exp(ops.clip(offsets[:, 2], -OFFSET_CLAMP, OFFSET_CLAMP)), ops.scale(aw, 0.5))
    half_h = ops.mul(ops.exp(ops.clip(offsets[:, 3], -OFFSET_CLAMP, OFFSET_CLAMP)), ops.scale(ah, 0.5))
    return ops.stack([ops.sub(cx, half_w), ops.sub(cy, half_h), ops.add(cx, half_w), ops.add(cy, half_h)], axis=1)
