"""
teacher.py - Toy classification teacher: conv block l1 -> conv block l2 -> global pool -> linear head
"""

import hashlib
from collections import OrderedDict
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from cls2det.diffmath import ops
from cls2det.diffmath.layers import conv2d, linear_map
from cls2det.diffmath.tensor import DiffTensor, no_grad
from cls2det.errors import ShapeError
from cls2det.utils.logger import get_logger, setup_logger

setup_logger()
logger = get_logger()

TEACHER_LAYERS = ("l1", "l2")


def param_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), stream])))


def he_normal(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class TeacherModel:
    """
    l1: 3x3 conv, stride 2, relu; l2: 3x3 conv, stride 2, relu; global mean pool; linear C-way head.
    A 32x32 input gives l1 maps of 16x16 and l2 maps of 8x8.
    """

    def __init__(self, num_classes: int, input_size: int = 32, channels: Tuple[int, int] = (16, 32),
                 in_channels: int = 3, seed: int = 0, zero_head: bool = False):
        self.num_classes = int(num_classes)
        self.input_size = int(input_size)
        self.channels = tuple(int(c) for c in channels)
        self.in_channels = int(in_channels)
        rng = param_rng(seed, 1)
        c1, c2 = self.channels
        self.params: "OrderedDict[str, DiffTensor]" = OrderedDict()
        self.params["l1.weight"] = DiffTensor(he_normal(rng, (c1, in_channels, 3, 3), in_channels * 9), requires_grad=True)
        self.params["l1.bias"] = DiffTensor(np.zeros(c1), requires_grad=True)
        self.params["l2.weight"] = DiffTensor(he_normal(rng, (c2, c1, 3, 3), c1 * 9), requires_grad=True)
        self.params["l2.bias"] = DiffTensor(np.zeros(c2), requires_grad=True)
        head = np.zeros((c2, num_classes)) if zero_head else rng.standard_normal((c2, num_classes)) * np.sqrt(1.0 / c2)
        self.params["fc.weight"] = DiffTensor(head, requires_grad=True)
        self.params["fc.bias"] = DiffTensor(np.zeros(num_classes), requires_grad=True)

    @property
    def architecture(self) -> dict:
        return {"num_classes": self.num_classes, "input_size": self.input_size,
                "channels": list(self.channels), "in_channels": self.in_channels}

    @classmethod
    def from_architecture(cls, arch: dict) -> "TeacherModel":
        return cls(arch["num_classes"], arch["input_size"], tuple(arch["channels"]), arch.get("in_channels", 3))

    def parameters(self):
        return list(self.params.values())

    def freeze(self) -> "TeacherModel":
        for p in self.params.values():
            p.requires_grad = False
            p.grad = None
        return self

    def _blocks(self, x: DiffTensor, upto: str) -> Dict[str, DiffTensor]:
        p = self.params
        out = {}
        out["l1"] = ops.relu(conv2d(x, p["l1.weight"], stride=2, pad=1, bias=p["l1.bias"]))
        if upto == "l1":
            return out
        out["l2"] = ops.relu(conv2d(out["l1"], p["l2.weight"], stride=2, pad=1, bias=p["l2.bias"]))
        return out

    def features(self, x: DiffTensor, layers: Sequence[str]) -> Dict[str, DiffTensor]:
        """Intermediate maps of any input size; only the blocks needed for `layers` run."""
        unknown = [layer for layer in layers if layer not in TEACHER_LAYERS]
        if unknown:
            raise ShapeError(f"teacher has no layers {unknown}")
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"teacher input must be [N,{self.in_channels},H,W], got {x.shape}")
        upto = "l2" if "l2" in layers else "l1"
        maps = self._blocks(x, upto)
        return {layer: maps[layer] for layer in layers}

    def forward(self, x: DiffTensor, tap_layers: Sequence[str] = ()) -> Tuple[DiffTensor, Dict[str, DiffTensor]]:
        if x.ndim != 4 or x.shape[1:] != (self.in_channels, self.input_size, self.input_size):
            raise ShapeError(f"teacher expects [N,{self.in_channels},{self.input_size},{self.input_size}], got {x.shape}")
        maps = self._blocks(x, "l2")
        pooled = ops.mean(maps["l2"], axes=(2, 3))
        logits = linear_map(pooled, self.params["fc.weight"], self.params["fc.bias"])
        return logits, {layer: maps[layer] for layer in tap_layers}

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, p in self.params.items():
            h.update(name.encode("utf-8"))
            h.update(p.data.tobytes())
        return h.hexdigest()


def teacher_forward(model: TeacherModel, x: DiffTensor, tap_layers: Sequence[str] = ()):
    return model.forward(x, tap_layers)


def predict_labels(model: TeacherModel, x: np.ndarray, batch_size: Optional[int] = 256) -> np.ndarray:
    out = []
    with no_grad():
        for i in range(0, x.shape[0], batch_size):
            logits, _ = model.forward(DiffTensor(x[i:i + batch_size]))
            out.append(logits.data.argmax(axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)
