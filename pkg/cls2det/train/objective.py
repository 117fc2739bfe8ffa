"""
objective.py - Overall training loss: detection loss plus weighted distillation terms
"""

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from cls2det.diffmath import ops
from cls2det.diffmath.tensor import DiffTensor
from cls2det.distill.config import DistillConfig
from cls2det.errors import NumericalError, ShapeError


@dataclass
class LossBreakdown:
    total: DiffTensor
    det: float
    kd_cls: float
    kd_loc: float

    def to_dict(self) -> Dict[str, float]:
        return {"loss": self.total.item(), "loss_det": self.det, "loss_kd_cls": self.kd_cls,
                "loss_kd_loc": self.kd_loc}


def _check(name: str, value: Optional[DiffTensor]):
    if value is None:
        return
    if value.size != 1:
        raise ShapeError(f"{name} must be a scalar, got shape {value.shape}")
    if not np.isfinite(value.data).all():
        raise NumericalError(f"loss component {name} is not finite ({float(value.data.reshape(-1)[0])})")


def total_loss(det: DiffTensor, kd_cls: Optional[DiffTensor], kd_loc: Optional[DiffTensor],
               cfg: DistillConfig) -> DiffTensor:
    """
    L = L_det + lambda_kc L_kd-cls + lambda_kl L_kd-loc.

    A term that is None or has weight 0 never enters the graph, so with both weights
    at 0 the result is L_det itself.
    """
    _check("det", det)
    _check("kd_cls", kd_cls)
    _check("kd_loc", kd_loc)
    total = det
    if kd_cls is not None and cfg.lambda_kc != 0:
        total = ops.add(total, ops.scale(kd_cls, cfg.lambda_kc))
    if kd_loc is not None and cfg.lambda_kl != 0:
        total = ops.add(total, ops.scale(kd_loc, cfg.lambda_kl))
    return total


def loss_breakdown(det: DiffTensor, kd_cls: Optional[DiffTensor], kd_loc: Optional[DiffTensor],
                   cfg: DistillConfig) -> LossBreakdown:
    total = total_loss(det, kd_cls, kd_loc, cfg)
    return LossBreakdown(total, det.item(), kd_cls.item() if kd_cls is not None else 0.0,
                         kd_loc.item() if kd_loc is not None else 0.0)
