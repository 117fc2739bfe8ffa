"""
crops.py - Classification crops of annotated objects (the teacher's training set and kd_cls inputs)
"""

from pathlib import Path
from typing import Sequence

import numpy as np

from cls2det.diffmath.sampling import crop_and_resize
from cls2det.utils.logger import get_logger, setup_logger
from .dataset_io import (
    ClassificationDataset, DetectionDataset, read_detection_dataset, write_classification_dataset,
)

setup_logger()
logger = get_logger()


def crop_objects(image: np.ndarray, boxes: np.ndarray, size: int) -> np.ndarray:
    """[K, C, size, size] bilinear crops of the integer pixel extent of every box."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    out = np.empty((boxes.shape[0], image.shape[0], size, size))
    for k, box in enumerate(boxes):
        out[k] = crop_and_resize(image, box, size)
    return out


def batch_gt_crops(images: np.ndarray, image_index: Sequence[int], boxes: np.ndarray, size: int) -> np.ndarray:
    """Crops of boxes[k] taken from images[image_index[k]]."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    out = np.empty((boxes.shape[0], images.shape[1], size, size))
    for k, (b, box) in enumerate(zip(image_index, boxes)):
        out[k] = crop_and_resize(images[b], box, size)
    return out


def classification_crops(det: DetectionDataset, target_size: int) -> ClassificationDataset:
    crops, labels = [], []
    for image, ann in zip(det.images, det.annotations):
        if len(ann):
            crops.append(crop_objects(image, ann.boxes, target_size))
            labels.append(ann.labels)
    if crops:
        stacked = np.concatenate(crops)
        label_arr = np.concatenate(labels)
    else:
        stacked = np.zeros((0, det.images.shape[1], target_size, target_size))
        label_arr = np.zeros(0, dtype=np.int64)
    return ClassificationDataset(det.num_classes, target_size, stacked, label_arr.astype(np.int64))


def derive_classification_crops(det_path: Path, target_size: int, out_path: Path) -> ClassificationDataset:
    """One crop per annotated object of a KDDS file, written as KDCL."""
    det = read_detection_dataset(det_path)
    data = classification_crops(det, target_size)
    write_classification_dataset(out_path, data)
    logger.info(f"Derived {len(data)} crops of {target_size}px from {len(det)} scenes in {det_path}")
    return data
