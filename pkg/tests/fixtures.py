"""
fixtures.py - Tiny in-memory datasets shared by the training, evaluation and CLI tests
"""

import numpy as np

from cls2det.synthdata.dataset_io import ClassificationDataset, DetectionDataset
from cls2det.synthdata.scenes import SceneSpec, generate_split

TINY_SPEC = SceneSpec(image_size=32, num_classes=3, min_objects=1, max_objects=2, min_size=8, max_size=14)


def tiny_detection_set(seed: int = 0, split: int = 0, count: int = 4) -> DetectionDataset:
    scenes = generate_split(seed, split, count, TINY_SPEC, parallel=1)
    images = np.stack([image.pixels for image, _ in scenes])
    return DetectionDataset(TINY_SPEC.num_classes, TINY_SPEC.image_size, images, [ann for _, ann in scenes])


def tiny_crop_set(seed: int = 0, count: int = 12, size: int = 16, num_classes: int = 3) -> ClassificationDataset:
    """Crops whose mean colour depends on the label, so a teacher can learn them."""
    rng = np.random.default_rng(seed)
    labels = np.arange(count) % num_classes
    crops = rng.uniform(0.0, 0.2, size=(count, 3, size, size))
    crops[np.arange(count), labels % 3] += 0.7
    return ClassificationDataset(num_classes, size, crops, labels.astype(np.int64))
