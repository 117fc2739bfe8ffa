"""
scenes.py - Deterministic synthetic detection scenes: filled shapes in class colors on a noise background
"""

from dataclasses import asdict, dataclass, field
from typing import List, Tuple

import numpy as np
from PIL import Image, ImageDraw

from cls2det.errors import ConfigError
from cls2det.eval.iou import iou_matrix
from cls2det.utils.logger import get_logger, setup_logger

setup_logger()
logger = get_logger()

SHAPES = ("circle", "square", "triangle")
COLORS = (
    ("red", (220, 40, 40)),
    ("blue", (40, 90, 220)),
    ("green", (40, 170, 60)),
    ("yellow", (230, 200, 40)),
)
MAX_PLACEMENT_RETRIES = 100
TRAIN_SPLIT = 0
VAL_SPLIT = 1


@dataclass
class SceneSpec:
    image_size: int = 64
    num_classes: int = 6
    min_objects: int = 1
    max_objects: int = 3
    min_size: int = 10
    max_size: int = 24
    max_overlap: float = 0.3
    background: float = 0.5
    noise_amplitude: float = 0.08
    min_area: float = 16.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> "SceneSpec":
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if self.num_classes > len(SHAPES) * len(COLORS):
            raise ConfigError(f"at most {len(SHAPES) * len(COLORS)} shape/color classes, got {self.num_classes}")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ConfigError(f"object count range [{self.min_objects}, {self.max_objects}] is invalid")
        if not 4 <= self.min_size <= self.max_size <= self.image_size:
            raise ConfigError(f"object size range [{self.min_size}, {self.max_size}] does not fit {self.image_size}px")
        if not 0.0 <= self.max_overlap <= 1.0:
            raise ConfigError(f"max_overlap must lie in [0, 1], got {self.max_overlap}")
        if self.min_area > self.max_size ** 2:
            raise ConfigError(f"min_area {self.min_area} exceeds the largest object box {self.max_size}x{self.max_size}")
        return self

    @property
    def class_names(self) -> List[str]:
        return [class_name(c) for c in range(self.num_classes)]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SceneImage:
    pixels: np.ndarray

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]


@dataclass
class Annotation:
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self):
        return int(self.labels.shape[0])

    def validate(self, width: int, height: int, min_area: float = 16.0) -> "Annotation":
        b = self.boxes
        ok = ((b[:, 0] < b[:, 2]) & (b[:, 1] < b[:, 3]) & (b[:, 0] >= 0) & (b[:, 1] >= 0)
              & (b[:, 2] <= width) & (b[:, 3] <= height)
              & ((b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1]) >= min_area))
        if not np.all(ok):
            raise ConfigError(f"invalid annotation boxes {b[~ok].tolist()}")
        return self


def class_shape(c: int) -> str:
    return SHAPES[c % len(SHAPES)]


def class_color(c: int) -> Tuple[int, int, int]:
    return COLORS[c // len(SHAPES)][1]


def class_name(c: int) -> str:
    return f"{COLORS[c // len(SHAPES)][0]}_{class_shape(c)}"


def scene_rng(seed: int, split: int, index: int) -> np.random.Generator:
    """Counter-based Philox stream per (seed, split, index); scenes are independent of generation order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(split), int(index)])))


def render_shape_mask(shape: str, x0: int, y0: int, s: int, image_size: int) -> np.ndarray:
    mask = Image.new("L", (image_size, image_size), 0)
    draw = ImageDraw.Draw(mask)
    x1, y1 = x0 + s - 1, y0 + s - 1
    if shape == "circle":
        draw.ellipse([x0, y0, x1, y1], fill=255)
    elif shape == "square":
        draw.rectangle([x0, y0, x1, y1], fill=255)
    elif shape == "triangle":
        draw.polygon([(x0 + (s - 1) / 2.0, y0), (x0, y1), (x1, y1)], fill=255)
    else:
        raise ConfigError(f"unknown shape {shape!r}")
    return np.asarray(mask) > 127


def mask_box(mask: np.ndarray) -> np.ndarray:
    """Tight pixel-edge box (x1, y1, x2, y2) of a boolean mask."""
    ys, xs = np.nonzero(mask)
    return np.array([xs.min(), ys.min(), xs.max() + 1, ys.max() + 1], dtype=np.float64)


def generate_scene(rng: np.random.Generator, spec: SceneSpec) -> Tuple[SceneImage, Annotation]:
    """
    Render min..max objects on a noise background. Placements whose box overlaps an
    earlier one by IoU > max_overlap, or whose rendered box is smaller than min_area, are
    redrawn; after 100 failed draws the scene keeps the objects placed so far. The first
    object has no overlap constraint and a rendered box spans nearly its whole s x s square, so
    with min_area well below min_size ** 2 every scene holds at least one.
    """
    n = spec.image_size
    pixels = spec.background + spec.noise_amplitude * (2.0 * rng.random((3, n, n)) - 1.0)
    target = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    boxes: List[np.ndarray] = []
    labels: List[int] = []
    for obj in range(target):
        label = int(rng.integers(spec.num_classes))
        placed = None
        for _ in range(MAX_PLACEMENT_RETRIES):
            s = int(rng.integers(spec.min_size, spec.max_size + 1))
            x0 = int(rng.integers(0, n - s + 1))
            y0 = int(rng.integers(0, n - s + 1))
            candidate = np.array([[x0, y0, x0 + s, y0 + s]], dtype=np.float64)
            if boxes and iou_matrix(candidate, np.stack(boxes)).max() > spec.max_overlap:
                continue
            mask = render_shape_mask(class_shape(label), x0, y0, s, n)
            box = mask_box(mask)
            if (box[2] - box[0]) * (box[3] - box[1]) < spec.min_area:
                continue
            placed = (mask, box)
            break
        if placed is None:
            logger.debug(f"placement retries exhausted after {obj} object(s)")
            break
        mask, box = placed
        pixels[:, mask] = (np.asarray(class_color(label), dtype=np.float64) / 255.0)[:, None]
        boxes.append(box)
        labels.append(label)
    pixels = np.clip(pixels, 0.0, 1.0)
    ann = Annotation(np.stack(boxes) if boxes else np.zeros((0, 4)), np.asarray(labels, dtype=np.int64))
    return SceneImage(pixels), ann


def generate_split(seed: int, split: int, count: int, spec: SceneSpec, parallel: int = 1):
    """Scenes 0..count-1 of a split, in index order."""
    from cls2det.train.prefetch import map_bounded

    def one(index: int):
        return generate_scene(scene_rng(seed, split, index), spec)

    return map_bounded(one, range(count), parallel)
