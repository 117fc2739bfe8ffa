"""
dataset_io.py - Binary dataset files (KDDS detection scenes, KDCL classification crops) and their metadata

KDDS: "KDDS" | version u32 | C u32 | image_size u32 | count u32, then per record
      image f32[3 * S * S] (CHW) | n u32 | n x (x1, y1, x2, y2 f32, label u32)
KDCL: "KDCL" | version u32 | C u32 | crop_size u32 | count u32, then per record
      crop f32[3 * s * s] (CHW) | label u32
All integers and floats are little-endian.
"""

import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from cls2det.errors import ConfigError, DatasetFormatError
from cls2det.utils.logger import get_logger, setup_logger
from .scenes import TRAIN_SPLIT, VAL_SPLIT, Annotation, SceneImage, SceneSpec, generate_split

setup_logger()
logger = get_logger()

DETECTION_MAGIC = b"KDDS"
CROPS_MAGIC = b"KDCL"
FORMAT_VERSION = 1
CHANNELS = 3

TRAIN_FILE = "train.kdds"
VAL_FILE = "val.kdds"
TRAIN_CROPS_FILE = "train_crops.kdcl"
VAL_CROPS_FILE = "val_crops.kdcl"
META_FILE = "dataset_meta.json"

_HEADER = struct.Struct("<4sIIII")
_U32 = struct.Struct("<I")
_F32 = np.dtype("<f4")
_ANNOTATION = np.dtype([("box", "<f4", (4,)), ("label", "<u4")])


@dataclass
class DatasetMeta:
    num_classes: int
    class_names: List[str]
    image_size: int
    split_sizes: Dict[str, int]
    seed: int
    spec: dict = field(default_factory=dict)
    crop_size: Optional[int] = None
    dataset_hash: str = ""

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: Path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: Path) -> "DatasetMeta":
        with open(path, "r") as f:
            return cls(**json.load(f))


@dataclass
class DetectionDataset:
    num_classes: int
    image_size: int
    images: np.ndarray
    annotations: List[Annotation]

    def __len__(self):
        return len(self.annotations)

    @property
    def num_objects(self) -> int:
        return sum(len(a) for a in self.annotations)


@dataclass
class ClassificationDataset:
    num_classes: int
    crop_size: int
    crops: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return int(self.labels.shape[0])


class _Cursor:
    """Sequential reader that reports truncation with the record index."""

    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int, record: Optional[int]) -> bytes:
        if self.pos + n > len(self.buf):
            where = "header" if record is None else f"record {record}"
            raise DatasetFormatError(f"{self.path}: truncated {where} (need {n} bytes at offset {self.pos})")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out


def _read_header(cur: _Cursor, magic: bytes) -> Tuple[int, int, int]:
    found, version, c, size, count = _HEADER.unpack(cur.take(_HEADER.size, None))
    if found != magic:
        raise DatasetFormatError(f"{cur.path}: bad magic {found!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"{cur.path}: unsupported version {version}")
    return c, size, count


def encode_detection_dataset(num_classes: int, image_size: int, scenes: Sequence[Tuple[SceneImage, Annotation]]) -> bytes:
    out = io.BytesIO()
    out.write(_HEADER.pack(DETECTION_MAGIC, FORMAT_VERSION, num_classes, image_size, len(scenes)))
    for image, ann in scenes:
        if image.pixels.shape != (CHANNELS, image_size, image_size):
            raise ConfigError(f"scene of shape {image.pixels.shape} in a {image_size}px dataset")
        out.write(np.ascontiguousarray(image.pixels, dtype=_F32).tobytes())
        out.write(_U32.pack(len(ann)))
        rec = np.zeros(len(ann), dtype=_ANNOTATION)
        rec["box"] = ann.boxes
        rec["label"] = ann.labels
        out.write(rec.tobytes())
    return out.getvalue()


def write_detection_dataset(path: Path, num_classes: int, image_size: int,
                            scenes: Sequence[Tuple[SceneImage, Annotation]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_detection_dataset(num_classes, image_size, scenes))
    logger.info(f"Wrote {len(scenes)} scenes to {path}")
    return path


def read_detection_dataset(path: Path) -> DetectionDataset:
    path = Path(path)
    cur = _Cursor(path.read_bytes(), path)
    c, size, count = _read_header(cur, DETECTION_MAGIC)
    pixels_bytes = CHANNELS * size * size * _F32.itemsize
    images = np.empty((count, CHANNELS, size, size), dtype=np.float64)
    annotations = []
    for i in range(count):
        images[i] = np.frombuffer(cur.take(pixels_bytes, i), dtype=_F32).reshape(CHANNELS, size, size)
        (n,) = _U32.unpack(cur.take(_U32.size, i))
        rec = np.frombuffer(cur.take(n * _ANNOTATION.itemsize, i), dtype=_ANNOTATION)
        labels = rec["label"].astype(np.int64)
        if n and labels.max() >= c:
            raise DatasetFormatError(f"{path}: record {i} has label {labels.max()} >= C = {c}")
        annotations.append(Annotation(rec["box"].astype(np.float64).reshape(-1, 4), labels))
    if cur.pos != len(cur.buf):
        raise DatasetFormatError(f"{path}: {len(cur.buf) - cur.pos} trailing bytes after record {count - 1}")
    return DetectionDataset(c, size, images, annotations)


def write_classification_dataset(path: Path, data: ClassificationDataset) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = io.BytesIO()
    out.write(_HEADER.pack(CROPS_MAGIC, FORMAT_VERSION, data.num_classes, data.crop_size, len(data)))
    for crop, label in zip(data.crops, data.labels):
        out.write(np.ascontiguousarray(crop, dtype=_F32).tobytes())
        out.write(_U32.pack(int(label)))
    path.write_bytes(out.getvalue())
    logger.info(f"Wrote {len(data)} crops to {path}")
    return path


def read_classification_dataset(path: Path) -> ClassificationDataset:
    path = Path(path)
    cur = _Cursor(path.read_bytes(), path)
    c, size, count = _read_header(cur, CROPS_MAGIC)
    crop_bytes = CHANNELS * size * size * _F32.itemsize
    crops = np.empty((count, CHANNELS, size, size), dtype=np.float64)
    labels = np.empty(count, dtype=np.int64)
    for i in range(count):
        crops[i] = np.frombuffer(cur.take(crop_bytes, i), dtype=_F32).reshape(CHANNELS, size, size)
        (labels[i],) = _U32.unpack(cur.take(_U32.size, i))
        if labels[i] >= c:
            raise DatasetFormatError(f"{path}: record {i} has label {labels[i]} >= C = {c}")
    if cur.pos != len(cur.buf):
        raise DatasetFormatError(f"{path}: {len(cur.buf) - cur.pos} trailing bytes after record {count - 1}")
    return ClassificationDataset(c, size, crops, labels)


def dataset_hash(paths: Sequence[Path]) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def build_detection_dataset(seed: int, n_train: int, n_val: int, spec: SceneSpec, out_dir: Path,
                            parallel: Optional[int] = None) -> DatasetMeta:
    """Write train.kdds, val.kdds and dataset_meta.json; train and val draw from disjoint seed streams."""
    if n_train < 1 or n_val < 1:
        raise ConfigError(f"split sizes must be >= 1, got train={n_train} val={n_val}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for split, name, count in ((TRAIN_SPLIT, TRAIN_FILE, n_train), (VAL_SPLIT, VAL_FILE, n_val)):
        scenes = generate_split(seed, split, count, spec, parallel)
        for image, ann in scenes:
            ann.validate(image.width, image.height, spec.min_area)
        written.append(write_detection_dataset(out_dir / name, spec.num_classes, spec.image_size, scenes))
    meta = DatasetMeta(spec.num_classes, spec.class_names, spec.image_size,
                       {"train": n_train, "val": n_val}, int(seed), spec.to_dict(),
                       dataset_hash=dataset_hash(written))
    meta.save(out_dir / META_FILE)
    return meta


def load_meta(data_dir: Path) -> Optional[DatasetMeta]:
    path = Path(data_dir) / META_FILE
    if not path.exists():
        logger.warning(f"No {META_FILE} in {data_dir}")
        return None
    return DatasetMeta.load(path)
