"""
COCO-style detection metrics and detection-error analysis.

inference.py depends on the models package and is imported explicitly.
"""
from .iou import iou, iou_matrix
from .detections import Detections, GroundTruth, nms
from .coco_metrics import EvalConfig, CocoMetrics, IOU_THRESHOLDS, average_precision, coco_metrics, mean_ap_at
from .error_analysis import ErrorReport, ERROR_TYPES, error_decomposition, error_sweep, error_table
