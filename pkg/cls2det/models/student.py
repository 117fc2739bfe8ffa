"""
student.py - Toy single-stage anchor-based detector with a categorical or binary classification head
"""

import math
from collections import OrderedDict
from typing import Sequence, Tuple

import numpy as np

from cls2det.diffmath import ops
from cls2det.diffmath.layers import conv2d
from cls2det.diffmath.tensor import DiffTensor
from cls2det.distill.kd_cls import BINARY, CATEGORICAL, HEAD_KINDS
from cls2det.errors import ConfigError, ShapeError
from cls2det.utils.logger import get_logger, setup_logger
from .anchors import anchor_array
from .teacher import he_normal, param_rng

setup_logger()
logger = get_logger()

PRIOR_PROBABILITY = 0.01


class StudentDetector:
    """
    Three stride-2 conv blocks (64x64 -> 8x8), then two 3x3 heads per cell:
    A_cell * D class logits and A_cell * 4 box offsets. Anchors run row-major over
    (row, col, scale, ratio), matching the order of the flattened head outputs.
    """

    def __init__(self, num_classes: int, head_kind: str = CATEGORICAL, image_size: int = 64,
                 channels: Tuple[int, int, int] = (16, 32, 32), anchor_scales: Sequence[float] = (12.0, 22.0),
                 anchor_ratios: Sequence[float] = (1.0,), in_channels: int = 3, seed: int = 0,
                 zero_heads: bool = False):
        if head_kind not in HEAD_KINDS:
            raise ConfigError(f"unknown head kind {head_kind!r}; choose from {list(HEAD_KINDS)}")
        self.num_classes = int(num_classes)
        self.head_kind = head_kind
        self.image_size = int(image_size)
        self.channels = tuple(int(c) for c in channels)
        self.anchor_scales = tuple(float(s) for s in anchor_scales)
        self.anchor_ratios = tuple(float(r) for r in anchor_ratios)
        self.in_channels = int(in_channels)
        self.stride = 2 ** len(self.channels)
        if self.image_size % self.stride:
            raise ConfigError(f"image size {self.image_size} must be a multiple of {self.stride}")
        self.grid = self.image_size // self.stride
        self.anchors_per_cell = len(self.anchor_scales) * len(self.anchor_ratios)
        self.anchors = anchor_array(self.image_size, self.stride, self.anchor_scales, self.anchor_ratios)

        rng = param_rng(seed, 2)
        self.params: "OrderedDict[str, DiffTensor]" = OrderedDict()
        prev = self.in_channels
        for i, c in enumerate(self.channels, start=1):
            self.params[f"b{i}.weight"] = DiffTensor(he_normal(rng, (c, prev, 3, 3), prev * 9), requires_grad=True)
            self.params[f"b{i}.bias"] = DiffTensor(np.zeros(c), requires_grad=True)
            prev = c
        a, d = self.anchors_per_cell, self.num_logits
        cls_w = np.zeros((a * d, prev, 3, 3)) if zero_heads else rng.standard_normal((a * d, prev, 3, 3)) * 0.01
        box_w = np.zeros((a * 4, prev, 3, 3)) if zero_heads else rng.standard_normal((a * 4, prev, 3, 3)) * 0.01
        cls_b = np.zeros(a * d)
        if head_kind == BINARY and not zero_heads:
            cls_b[:] = -math.log((1.0 - PRIOR_PROBABILITY) / PRIOR_PROBABILITY)
        self.params["cls.weight"] = DiffTensor(cls_w, requires_grad=True)
        self.params["cls.bias"] = DiffTensor(cls_b, requires_grad=True)
        self.params["box.weight"] = DiffTensor(box_w, requires_grad=True)
        self.params["box.bias"] = DiffTensor(np.zeros(a * 4), requires_grad=True)

    @property
    def num_logits(self) -> int:
        return self.num_classes + 1 if self.head_kind == CATEGORICAL else self.num_classes

    @property
    def num_anchors(self) -> int:
        return self.grid * self.grid * self.anchors_per_cell

    @property
    def architecture(self) -> dict:
        return {"num_classes": self.num_classes, "head_kind": self.head_kind, "image_size": self.image_size,
                "channels": list(self.channels), "anchor_scales": list(self.anchor_scales),
                "anchor_ratios": list(self.anchor_ratios), "in_channels": self.in_channels}

    @classmethod
    def from_architecture(cls, arch: dict) -> "StudentDetector":
        return cls(arch["num_classes"], arch["head_kind"], arch["image_size"], tuple(arch["channels"]),
                   tuple(arch["anchor_scales"]), tuple(arch["anchor_ratios"]), arch.get("in_channels", 3))

    def parameters(self):
        return list(self.params.values())

    def _head(self, feats: DiffTensor, name: str, depth: int) -> DiffTensor:
        n = feats.shape[0]
        out = conv2d(feats, self.params[f"{name}.weight"], stride=1, pad=1, bias=self.params[f"{name}.bias"])
        out = ops.reshape(out, (n, self.anchors_per_cell, depth, self.grid, self.grid))
        out = ops.transpose(out, (0, 3, 4, 1, 2))
        return ops.reshape(out, (n, self.num_anchors, depth))

    def forward(self, x: DiffTensor) -> Tuple[DiffTensor, DiffTensor]:
        """Images [N, 3, S, S] -> class logits [N, A, D] and box offsets [N, A, 4]."""
        if x.ndim != 4 or x.shape[1:] != (self.in_channels, self.image_size, self.image_size):
            raise ShapeError(f"student expects [N,{self.in_channels},{self.image_size},{self.image_size}], got {x.shape}")
        h = x
        for i in range(1, len(self.channels) + 1):
            h = ops.relu(conv2d(h, self.params[f"b{i}.weight"], stride=2, pad=1, bias=self.params[f"b{i}.bias"]))
        return self._head(h, "cls", self.num_logits), self._head(h, "box", 4)


def student_forward(model: StudentDetector, x: DiffTensor):
    return model.forward(x)
