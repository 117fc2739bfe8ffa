"""
Synthetic shape scenes, their binary dataset files and the derived classification crops.
"""
from .scenes import SceneSpec, SceneImage, Annotation, generate_scene, generate_split, scene_rng, class_name
from .dataset_io import (
    DatasetMeta, DetectionDataset, ClassificationDataset, build_detection_dataset,
    read_detection_dataset, write_detection_dataset, read_classification_dataset,
    write_classification_dataset, dataset_hash, load_meta,
)
from .crops import derive_classification_crops, classification_crops, crop_objects, batch_gt_crops
