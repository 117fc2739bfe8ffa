"""
Classification and localization distillation losses.
"""
from .config import DistillConfig, parse_layers, PIXEL_LAYER, FEATURE_LAYERS, ALL_LAYERS
from .kd_cls import (
    SoftenedDistribution, LogitBatch, CATEGORICAL, BINARY, HEAD_KINDS,
    soften_categorical, soften_binary, teacher_background_augment, binary_two_class_expand,
    kl_categorical, kl_binary, kd_cls_loss,
)
from .kd_loc import (
    CroppedRegion, box_to_affine, boxes_to_affine, spatial_transform_crop, crop_boxes, valid_box_mask,
    kd_loc_feature_terms, kd_loc_feature_loss, kd_loc_pixel_loss, kd_loc_loss,
)
