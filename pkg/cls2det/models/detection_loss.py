"""
detection_loss.py - Detector losses: softmax cross-entropy with hard-negative mining, sigmoid focal loss,
smooth-L1 box regression, and the classification losses reused by teacher training
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from cls2det.diffmath import ops
from cls2det.diffmath.tensor import DiffTensor
from cls2det.distill.kd_cls import CATEGORICAL, HEAD_KINDS
from cls2det.errors import KindError, ShapeError
from .anchors import AnchorAssignment, encode_boxes

NEGATIVE_RATIO = 3
FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 0.25
SMOOTH_L1_BETA = 1.0
TEACHER_LOSSES = ("categorical", "binary", "joint", "focal")


@dataclass
class DetectionLoss:
    classification: DiffTensor
    localization: DiffTensor
    num_positives: int

    @property
    def total(self) -> DiffTensor:
        return ops.add(self.classification, self.localization)


def cross_entropy_terms(logits: DiffTensor, targets: np.ndarray) -> DiffTensor:
    """Per-row -log softmax(logits)[target] for logits [M, D]."""
    targets = np.asarray(targets, dtype=np.int64)
    logp = ops.log_softmax_t(logits, 1.0)
    return ops.neg(ops.index(logp, (np.arange(targets.shape[0]), targets)))


def binary_cross_entropy(logits: DiffTensor, targets: np.ndarray) -> DiffTensor:
    """Sum of -[y log sigmoid(z) + (1 - y) log(1 - sigmoid(z))] over all entries."""
    sign = DiffTensor(2.0 * np.asarray(targets, dtype=np.float64) - 1.0)
    return ops.neg(ops.sum_(ops.log_sigmoid_t(ops.mul(logits, sign), 1.0)))


def sigmoid_focal_loss(logits: DiffTensor, targets: np.ndarray, gamma: float = FOCAL_GAMMA,
                       alpha: float = FOCAL_ALPHA) -> DiffTensor:
    """
    Sum of -alpha_t (1 - p_t)^gamma log p_t with p_t = sigmoid(z) for y = 1 and 1 - sigmoid(z) for y = 0.
    gamma = 0, alpha = 0.5 gives half the binary cross-entropy.
    """
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != logits.shape:
        raise ShapeError(f"focal targets {y.shape} do not match logits {logits.shape}")
    signed = ops.mul(logits, DiffTensor(2.0 * y - 1.0))
    log_pt = ops.log_sigmoid_t(signed, 1.0)
    modulator = ops.power(ops.sub(1.0, ops.sigmoid_t(signed, 1.0)), gamma)
    alpha_t = DiffTensor(np.where(y > 0.5, alpha, 1.0 - alpha))
    return ops.neg(ops.sum_(ops.mul(ops.mul(alpha_t, modulator), log_pt)))


def box_regression_loss(offsets: DiffTensor, targets: np.ndarray) -> DiffTensor:
    """Summed smooth-L1 between predicted offsets [K, 4] and targets [K, 4]."""
    return ops.sum_(ops.smooth_l1(ops.sub(offsets, DiffTensor(targets)), SMOOTH_L1_BETA))


def _flat_targets(assignments: Sequence[AnchorAssignment], anchors: np.ndarray, num_classes: int):
    """Flattened (image, anchor) bookkeeping for a batch."""
    a = anchors.shape[0]
    pos_idx: List[np.ndarray] = []
    pos_labels: List[np.ndarray] = []
    box_targets: List[np.ndarray] = []
    neg_idx: List[np.ndarray] = []
    for b, asg in enumerate(assignments):
        if asg.num_anchors != a:
            raise ShapeError(f"assignment over {asg.num_anchors} anchors, model has {a}")
        pos_idx.append(b * a + asg.positive_indices)
        pos_labels.append(asg.matched_labels)
        box_targets.append(encode_boxes(anchors[asg.positive_indices], asg.matched_boxes))
        neg_idx.append(b * a + asg.negative_indices)
    labels = np.concatenate(pos_labels).astype(np.int64) if pos_labels else np.zeros(0, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ShapeError(f"labels outside [0, {num_classes})")
    return (np.concatenate(pos_idx).astype(np.int64), labels,
            np.concatenate(box_targets).reshape(-1, 4), np.concatenate(neg_idx).astype(np.int64))


def detection_loss(cls_logits: DiffTensor, box_offsets: DiffTensor, assignments: Sequence[AnchorAssignment],
                   anchors: np.ndarray, head_kind: str) -> DetectionLoss:
    """
    L_det over a batch. cls_logits [N, A, D], box_offsets [N, A, 4], one assignment per image.

    categorical: cross-entropy over positives and the hardest 3 max(K, 1) negatives (background class C);
    binary: focal loss over every anchor, non-positives as background. Both add smooth-L1 on positive offsets and
    are normalized by max(K, 1) with K counted over the whole batch.
    """
    if head_kind not in HEAD_KINDS:
        raise KindError(f"unknown head kind {head_kind!r}")
    if cls_logits.ndim != 3 or box_offsets.ndim != 3 or cls_logits.shape[:2] != box_offsets.shape[:2]:
        raise ShapeError(f"head outputs disagree: {cls_logits.shape} vs {box_offsets.shape}")
    n, a, d = cls_logits.shape
    if len(assignments) != n:
        raise ShapeError(f"{len(assignments)} assignments for a batch of {n}")
    num_classes = d - 1 if head_kind == CATEGORICAL else d
    pos, labels, targets, neg = _flat_targets(assignments, np.asarray(anchors).reshape(-1, 4), num_classes)
    k = pos.shape[0]
    norm = 1.0 / max(k, 1)
    flat_logits = ops.reshape(cls_logits, (n * a, d))

    if head_kind == CATEGORICAL:
        background = num_classes
        neg_terms = cross_entropy_terms(ops.take(flat_logits, neg, axis=0), np.full(neg.shape[0], background))
        keep = min(NEGATIVE_RATIO * max(k, 1), neg.shape[0])
        hardest = np.argsort(-neg_terms.data, kind="stable")[:keep]
        cls_sum = ops.sum_(ops.take(neg_terms, hardest, axis=0)) if keep else DiffTensor(0.0)
        if k:
            cls_sum = ops.add(cls_sum, ops.sum_(cross_entropy_terms(ops.take(flat_logits, pos, axis=0), labels)))
    else:
        onehot = np.zeros((n * a, num_classes))
        onehot[pos, labels] = 1.0
        cls_sum = sigmoid_focal_loss(flat_logits, onehot)

    if k:
        flat_offsets = ops.reshape(box_offsets, (n * a, 4))
        loc_sum = box_regression_loss(ops.take(flat_offsets, pos, axis=0), targets)
    else:
        loc_sum = DiffTensor(0.0)
    return DetectionLoss(ops.scale(cls_sum, norm), ops.scale(loc_sum, norm), k)


def teacher_classification_loss(logits: DiffTensor, labels: np.ndarray, loss_kind: str) -> DiffTensor:
    """
    Batch-mean classifier loss: categorical cross-entropy, one-vs-all binary cross-entropy,
    their sum (joint), or sigmoid focal loss.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    if loss_kind == "categorical":
        total = ops.sum_(cross_entropy_terms(logits, labels))
    elif loss_kind == "binary":
        total = binary_cross_entropy(logits, onehot)
    elif loss_kind == "joint":
        total = ops.add(ops.sum_(cross_entropy_terms(logits, labels)), binary_cross_entropy(logits, onehot))
    elif loss_kind == "focal":
        total = sigmoid_focal_loss(logits, onehot)
    else:
        raise KindError(f"unknown teacher loss {loss_kind!r}")
    return ops.scale(total, 1.0 / max(n, 1))
