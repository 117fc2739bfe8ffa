"""
kd_cls.py - Classification distillation: softened teacher/student distributions and their KL losses

Two detection-head kinds are supported:
    categorical  student has C+1 logits (background last), teacher C logits padded with a zero column;
    binary       both have C logits, each class becomes a (False, True) pair.
Teacher values always enter as constants.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from cls2det.diffmath import ops
from cls2det.diffmath.tensor import DiffTensor
from cls2det.errors import DomainError, KindError, ShapeError
from cls2det.utils.logger import get_logger, setup_logger

setup_logger()
logger = get_logger()

CATEGORICAL = "categorical"
BINARY = "binary"
HEAD_KINDS = (CATEGORICAL, BINARY)


@dataclass
class SoftenedDistribution:
    """
    probs is [K, D] for categorical heads and [K, C, 2] (False, True) pairs for binary heads.
    log_probs, when present, holds the numerically stable logarithm of probs.
    """
    probs: DiffTensor
    temperature: float
    head_kind: str
    log_probs: Optional[DiffTensor] = None

    @property
    def num_boxes(self) -> int:
        return self.probs.shape[0]

    def log_values(self) -> DiffTensor:
        return self.log_probs if self.log_probs is not None else ops.log(self.probs)


@dataclass
class LogitBatch:
    logits: DiffTensor
    source: str

    @property
    def num_boxes(self) -> int:
        return self.logits.shape[0]


def soften_categorical(z: DiffTensor, T: float) -> SoftenedDistribution:
    return SoftenedDistribution(ops.softmax_t(z, T), float(T), CATEGORICAL, ops.log_softmax_t(z, T))


def teacher_background_augment(pt: SoftenedDistribution) -> SoftenedDistribution:
    """[p~, 0]: true objects are background with probability zero."""
    if pt.head_kind != CATEGORICAL:
        raise KindError(f"background augmentation needs a categorical distribution, got {pt.head_kind}")
    k = pt.probs.shape[0]
    probs = np.concatenate([pt.probs.data, np.zeros((k, 1))], axis=1)
    log_probs = None
    if pt.log_probs is not None:
        log_probs = DiffTensor(np.concatenate([pt.log_probs.data, np.full((k, 1), -np.inf)], axis=1))
    return SoftenedDistribution(DiffTensor(probs), pt.temperature, CATEGORICAL, log_probs)


def binary_two_class_expand(p: DiffTensor, T: float = 1.0, logits: Optional[DiffTensor] = None) -> SoftenedDistribution:
    """
    Each score p becomes the pair [1 - p, p]. When the logits behind p are given,
    the pair logarithms come from log-sigmoid instead of log(p).
    """
    if np.any(p.data <= 0) or np.any(p.data >= 1):
        raise DomainError("binary scores must lie strictly inside (0, 1)")
    pairs = ops.stack([ops.sub(1.0, p), p], axis=-1)
    log_pairs = None
    if logits is not None:
        log_pairs = ops.stack([ops.log_sigmoid_t(ops.neg(logits), T), ops.log_sigmoid_t(logits, T)], axis=-1)
    return SoftenedDistribution(pairs, float(T), BINARY, log_pairs)


def soften_binary(z: DiffTensor, T: float) -> SoftenedDistribution:
    return binary_two_class_expand(ops.sigmoid_t(z, T), T, logits=z)


def _check_pair(pt: SoftenedDistribution, ps: SoftenedDistribution, T: float, kind: str):
    if pt.head_kind != kind or ps.head_kind != kind:
        raise KindError(f"expected {kind} distributions, got {pt.head_kind} / {ps.head_kind}")
    if pt.probs.shape != ps.probs.shape:
        raise ShapeError(f"teacher {pt.probs.shape} and student {ps.probs.shape} distributions differ in shape")
    if not (pt.temperature == ps.temperature == float(T)):
        raise ShapeError(f"temperature mismatch: teacher {pt.temperature}, student {ps.temperature}, loss {T}")


def _kl_sum(pt: SoftenedDistribution, ps: SoftenedDistribution) -> DiffTensor:
    """sum p_t (log p_t - log p_s) with 0 log 0 = 0; the teacher side is constant."""
    p_t = pt.probs.data
    if pt.log_probs is not None:
        log_t = pt.log_probs.data
    else:
        with np.errstate(divide="ignore"):
            log_t = np.log(p_t)
    log_t = np.where(p_t > 0, log_t, 0.0)
    return ops.sum_(ops.mul(DiffTensor(p_t), ops.sub(DiffTensor(log_t), ps.log_values())))


def kl_categorical(pt: SoftenedDistribution, ps: SoftenedDistribution, T: float) -> DiffTensor:
    """(1/K) sum_k T^2 KL(p_t,k || p_s,k) over C+1 classes."""
    _check_pair(pt, ps, T, CATEGORICAL)
    k = pt.num_boxes
    if k == 0:
        return DiffTensor(0.0)
    return ops.scale(_kl_sum(pt, ps), float(T) ** 2 / k)


def kl_binary(pt_pairs: SoftenedDistribution, ps_pairs: SoftenedDistribution, T: float, C: int) -> DiffTensor:
    """(1/K) sum_k (T^2 / C) sum_c KL over the (False, True) pair of class c."""
    _check_pair(pt_pairs, ps_pairs, T, BINARY)
    if pt_pairs.probs.ndim != 3 or pt_pairs.probs.shape[1:] != (C, 2):
        raise ShapeError(f"binary pairs must be [K,{C},2], got {pt_pairs.probs.shape}")
    k = pt_pairs.num_boxes
    if k == 0:
        return DiffTensor(0.0)
    return ops.scale(_kl_sum(pt_pairs, ps_pairs), float(T) ** 2 / (C * k))


def kd_cls_loss(student_logits: DiffTensor, teacher_logits, head_kind: str, T: float) -> DiffTensor:
    """
    Batch-mean classification distillation loss over K positive boxes.

    categorical: student [K, C+1], teacher [K, C]; binary: both [K, C].
    K = 0 gives an exact zero without a gradient.
    """
    if head_kind not in HEAD_KINDS:
        raise KindError(f"unknown head kind {head_kind!r}")
    teacher = DiffTensor(teacher_logits.data if isinstance(teacher_logits, DiffTensor) else teacher_logits)
    if student_logits.ndim != 2 or teacher.ndim != 2:
        raise ShapeError(f"logits must be [K, D], got {student_logits.shape} and {teacher.shape}")
    k = student_logits.shape[0]
    if teacher.shape[0] != k:
        raise ShapeError(f"{k} student boxes but {teacher.shape[0]} teacher boxes")
    if k == 0:
        return DiffTensor(0.0)

    if head_kind == CATEGORICAL:
        if student_logits.shape[1] != teacher.shape[1] + 1:
            raise ShapeError(f"categorical student needs C+1 = {teacher.shape[1] + 1} logits, got {student_logits.shape[1]}")
        pt = teacher_background_augment(soften_categorical(teacher, T))
        ps = soften_categorical(student_logits, T)
        return kl_categorical(pt, ps, T)

    if student_logits.shape[1] != teacher.shape[1]:
        raise ShapeError(f"binary student and teacher need equal class counts, got {student_logits.shape[1]} and {teacher.shape[1]}")
    # float64 sigmoid rounds to exactly 0 or 1 beyond |z/T| ~ 36.7
    teacher = DiffTensor(np.clip(teacher.data, -30.0 * T, 30.0 * T))
    pt = soften_binary(teacher, T)
    ps = soften_binary(student_logits, T)
    return kl_binary(pt, ps, T, teacher.shape[1])
