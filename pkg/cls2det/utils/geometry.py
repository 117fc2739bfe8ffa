"""
geometry.py - Corner-form boxes and axis-aligned affine crop matrices
"""

from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from cls2det.errors import DegenerateBoxError


@dataclass(frozen=True)
class BoundingBox:
    """Corner-form box in pixel-edge coordinates: (x1, y1) top-left, (x2, y2) bottom-right."""
    x1: float
    y1: float
    x2: float
    y2: float

    def validate(self) -> "BoundingBox":
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise DegenerateBoxError(f"degenerate box {self.as_tuple()}")
        return self

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return max(self.width, 0.0) * max(self.height, 0.0)

    def clamp(self, w: float, h: float) -> "BoundingBox":
        return BoundingBox(min(max(self.x1, 0.0), w), min(max(self.y1, 0.0), h),
                           min(max(self.x2, 0.0), w), min(max(self.y2, 0.0), h))

    def as_tuple(self):
        return (self.x1, self.y1, self.x2, self.y2)

    def to_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "BoundingBox":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class AffineMatrix:
    """2x3 matrix mapping the normalized output grid into normalized input coordinates."""
    matrix: np.ndarray

    @property
    def is_axis_aligned(self) -> bool:
        return self.matrix[0, 1] == 0 and self.matrix[1, 0] == 0 and self.matrix[0, 0] > 0 and self.matrix[1, 1] > 0


def boxes_to_array(boxes: Iterable[BoundingBox]) -> np.ndarray:
    rows = [b.to_array() for b in boxes]
    return np.stack(rows) if rows else np.zeros((0, 4))


def array_to_boxes(a: np.ndarray) -> List[BoundingBox]:
    return [BoundingBox.from_array(row) for row in np.asarray(a).reshape(-1, 4)]


def box_areas(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    return np.clip(a[:, 2] - a[:, 0], 0, None) * np.clip(a[:, 3] - a[:, 1], 0, None)


def flip_boxes_horizontal(a: np.ndarray, width: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    return np.stack([width - a[:, 2], a[:, 1], width - a[:, 0], a[:, 3]], axis=1)
