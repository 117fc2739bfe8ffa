"""
Toy teacher classifier, toy anchor-based student detector, anchors and detection losses.
"""
from .anchors import AnchorAssignment, anchor_array, generate_anchors, assign_anchors, encode_boxes, decode_boxes
from .teacher import TeacherModel, TEACHER_LAYERS, teacher_forward, predict_labels
from .student import StudentDetector, student_forward
from .detection_loss import (
    DetectionLoss, detection_loss, cross_entropy_terms, binary_cross_entropy, sigmoid_focal_loss,
    box_regression_loss, teacher_classification_loss, TEACHER_LOSSES,
)
