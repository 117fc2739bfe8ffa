"""
kd_loc.py - Localization distillation through a spatial-transformer crop of the predicted boxes

A box (x1, y1, x2, y2) in a w x h image becomes the axis-aligned affine matrix
    [[(x2-x1)/w, 0, -1 + (x1+x2)/w],
     [0, (y2-y1)/h, -1 + (y1+y2)/h]]
which resamples the box onto an s x s grid. Teacher features (layers l1, l2) or raw
pixels (layer l0) of the predicted and ground-truth crops are adaptively pooled and
compared with an L1 distance. Gradients reach the predicted box corners only.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Protocol, Sequence

import numpy as np

from cls2det.diffmath import ops
from cls2det.diffmath.sampling import adaptive_avg_pool, affine_grid_sample
from cls2det.diffmath.tensor import DiffTensor, as_tensor, no_grad
from cls2det.errors import ConfigError, DegenerateBoxError, ShapeError
from cls2det.utils.geometry import AffineMatrix, BoundingBox, boxes_to_array
from cls2det.utils.logger import get_logger, setup_logger
from .config import DistillConfig, PIXEL_LAYER

setup_logger()
logger = get_logger()


class FeatureExtractor(Protocol):
    def features(self, x: DiffTensor, layers: Sequence[str]) -> Dict[str, DiffTensor]:
        ...


@dataclass
class CroppedRegion:
    pixels: DiffTensor
    source_box: Optional[BoundingBox]
    sampling_size: int


def box_to_affine(b: BoundingBox, w: float, h: float) -> AffineMatrix:
    if w <= 0 or h <= 0:
        raise ShapeError(f"image size must be positive, got {w}x{h}")
    b.validate()
    m = np.array([[(b.x2 - b.x1) / w, 0.0, -1.0 + (b.x1 + b.x2) / w],
                  [0.0, (b.y2 - b.y1) / h, -1.0 + (b.y1 + b.y2) / h]])
    return AffineMatrix(m)


def boxes_to_affine(boxes: DiffTensor, w: float, h: float) -> DiffTensor:
    """[K, 4] corner boxes -> [K, 2, 3] transforms, differentiable w.r.t. the corners."""
    if boxes.ndim != 2 or boxes.shape[1] != 4:
        raise ShapeError(f"boxes must be [K,4], got {boxes.shape}")
    d = boxes.data
    bad = ~((d[:, 0] < d[:, 2]) & (d[:, 1] < d[:, 3]))
    if np.any(bad):
        raise DegenerateBoxError(f"degenerate box {d[np.argmax(bad)].tolist()}")
    x1, y1, x2, y2 = (boxes[:, i] for i in range(4))
    zeros = DiffTensor(np.zeros(boxes.shape[0]))
    sx = ops.scale(ops.sub(x2, x1), 1.0 / w)
    sy = ops.scale(ops.sub(y2, y1), 1.0 / h)
    tx = ops.add(ops.scale(ops.add(x1, x2), 1.0 / w), -1.0)
    ty = ops.add(ops.scale(ops.add(y1, y2), 1.0 / h), -1.0)
    row0 = ops.stack([sx, zeros, tx], axis=1)
    row1 = ops.stack([zeros, sy, ty], axis=1)
    return ops.stack([row0, row1], axis=1)


def spatial_transform_crop(A, image: DiffTensor, s: int, source_box: Optional[BoundingBox] = None) -> CroppedRegion:
    """Sample image [C, H, W] through a single 2x3 transform onto an s x s grid."""
    if image.ndim != 3:
        raise ShapeError(f"image must be [C,H,W], got {image.shape}")
    theta = A if isinstance(A, DiffTensor) else DiffTensor(A.matrix if isinstance(A, AffineMatrix) else A)
    if theta.shape != (2, 3):
        raise ShapeError(f"affine matrix must be 2x3, got {theta.shape}")
    batch = ops.reshape(image, (1,) + image.shape)
    crop = affine_grid_sample(batch, ops.reshape(theta, (1, 2, 3)), [0], s)
    return CroppedRegion(ops.reshape(crop, crop.shape[1:]), source_box, s)


def _as_batch(images: DiffTensor, image_index, k: int):
    images = as_tensor(images)
    if images.ndim == 3:
        images = DiffTensor(images.data[None])
        return images, np.zeros(k, dtype=np.int64)
    if image_index is None:
        raise ShapeError("image_index is required for a batch of images")
    return images, np.asarray(image_index, dtype=np.int64)


def _boxes_tensor(boxes) -> DiffTensor:
    if isinstance(boxes, DiffTensor):
        return boxes
    if len(boxes) and isinstance(boxes[0], BoundingBox):
        return DiffTensor(boxes_to_array(boxes))
    return DiffTensor(np.asarray(boxes, dtype=np.float64).reshape(-1, 4))


def crop_boxes(images: DiffTensor, boxes: DiffTensor, image_index, s: int) -> DiffTensor:
    """[K, C, s, s] crops of boxes [K, 4] from images [N, C, H, W]."""
    h, w = images.shape[-2:]
    theta = boxes_to_affine(boxes, w, h)
    return affine_grid_sample(images, theta, image_index, s)


def valid_box_mask(boxes: np.ndarray, w: float, h: float, min_size: float = 1.0) -> np.ndarray:
    """Boxes usable for distillation: at least min_size wide and tall, centre inside the image."""
    b = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    cx = 0.5 * (b[:, 0] + b[:, 2])
    cy = 0.5 * (b[:, 1] + b[:, 3])
    return ((b[:, 2] - b[:, 0] >= min_size) & (b[:, 3] - b[:, 1] >= min_size)
            & (cx >= 0) & (cx <= w) & (cy >= 0) & (cy <= h))


def _l1_term(pred: DiffTensor, target: DiffTensor, cfg: DistillConfig) -> DiffTensor:
    """sum |AP(pred) - AP(target)| / (K M H W)."""
    pooled_p = adaptive_avg_pool(pred, cfg.pool_h, cfg.pool_w)
    pooled_t = adaptive_avg_pool(target, cfg.pool_h, cfg.pool_w)
    return ops.mean(ops.absolute(ops.sub(pooled_p, DiffTensor(pooled_t.data))))


def kd_loc_feature_terms(pred_boxes, gt_boxes, images, teacher: FeatureExtractor, cfg: DistillConfig,
                         image_index=None) -> Dict[str, DiffTensor]:
    """Per-layer localization terms for the teacher feature layers in cfg.layer_set."""
    layers = cfg.feature_layers
    if not layers:
        raise ConfigError(f"layer_set {list(cfg.layer_set)} has no teacher feature layer (l1, l2)")
    pred = _boxes_tensor(pred_boxes)
    gt = _boxes_tensor(gt_boxes)
    if pred.shape != gt.shape:
        raise ShapeError(f"{pred.shape[0]} predicted boxes but {gt.shape[0]} ground-truth boxes")
    k = pred.shape[0]
    if k == 0:
        return {layer: DiffTensor(0.0) for layer in layers}
    images, idx = _as_batch(images, image_index, k)
    pred_crops = crop_boxes(images, pred, idx, cfg.sampling_size)
    feats_p = teacher.features(pred_crops, layers)
    with no_grad():
        feats_g = teacher.features(crop_boxes(images, DiffTensor(gt.data), idx, cfg.sampling_size), layers)
    return {layer: _l1_term(feats_p[layer], feats_g[layer], cfg) for layer in layers}


def kd_loc_feature_loss(pred_boxes, gt_boxes, images, teacher: FeatureExtractor, cfg: DistillConfig,
                        image_index=None) -> DiffTensor:
    """
    Teacher-feature localization distillation, normalized per layer by K M H W
    (M = that layer's channel count) and averaged over the enabled layers.
    """
    terms = kd_loc_feature_terms(pred_boxes, gt_boxes, images, teacher, cfg, image_index)
    total = terms[cfg.feature_layers[0]]
    for layer in cfg.feature_layers[1:]:
        total = ops.add(total, terms[layer])
    return ops.scale(total, 1.0 / len(terms))


def kd_loc_pixel_loss(pred_boxes, gt_boxes, images, cfg: DistillConfig, image_index=None) -> DiffTensor:
    """Teacher-free variant on the object region itself, normalized by K M H W (M = image channels)."""
    pred = _boxes_tensor(pred_boxes)
    gt = _boxes_tensor(gt_boxes)
    if pred.shape != gt.shape:
        raise ShapeError(f"{pred.shape[0]} predicted boxes but {gt.shape[0]} ground-truth boxes")
    k = pred.shape[0]
    if k == 0:
        return DiffTensor(0.0)
    images, idx = _as_batch(images, image_index, k)
    pred_crops = crop_boxes(images, pred, idx, cfg.sampling_size)
    with no_grad():
        gt_crops = crop_boxes(images, DiffTensor(gt.data), idx, cfg.sampling_size)
    return _l1_term(pred_crops, gt_crops, cfg)


def kd_loc_loss(pred_boxes, gt_boxes, images, teacher: Optional[FeatureExtractor], cfg: DistillConfig,
                image_index=None, use_features: bool = True, use_pixels: bool = True) -> DiffTensor:
    """
    Localization distillation averaged over every enabled layer, l0 counting as one layer.
    With the default {l0, l1} this is the mean of the pixel and feature terms.
    """
    terms = []
    if use_features and cfg.feature_layers:
        if teacher is None:
            raise ConfigError("feature-level localization distillation needs a teacher")
        terms.extend(kd_loc_feature_terms(pred_boxes, gt_boxes, images, teacher, cfg, image_index).values())
    if use_pixels:
        terms.append(kd_loc_pixel_loss(pred_boxes, gt_boxes, images, cfg, image_index))
    if not terms:
        raise ConfigError(f"no localization distillation layer enabled (layer_set={list(cfg.layer_set)})")
    total = terms[0]
    for term in terms[1:]:
        total = ops.add(total, term)
    return ops.scale(total, 1.0 / len(terms))
