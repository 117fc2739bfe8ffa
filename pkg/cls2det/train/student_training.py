"""
student_training.py - Train the student detector with optional classification / localization distillation

Per batch: student forward, anchor assignment, detection loss, then
  kd_cls: ground-truth crops of the positives' objects go through the frozen teacher;
  kd_loc: positive boxes are decoded differentiably and compared with their ground truth
          in teacher feature space (l1/l2) and/or pixel space (l0);
overall loss backward, SGD step. Validation mAP is recorded at the end of every epoch.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from cls2det.diffmath import ops
from cls2det.diffmath.tensor import DiffTensor, backward, no_grad
from cls2det.distill.config import DistillConfig
from cls2det.distill.kd_cls import CATEGORICAL, HEAD_KINDS, kd_cls_loss
from cls2det.distill.kd_loc import kd_loc_loss, valid_box_mask
from cls2det.errors import ConfigError, NumericalError
from cls2det.eval.coco_metrics import CocoMetrics, EvalConfig
from cls2det.eval.inference import evaluate_model
from cls2det.models.anchors import AnchorAssignment, assign_anchors, decode_boxes
from cls2det.models.detection_loss import detection_loss
from cls2det.models.student import StudentDetector
from cls2det.models.teacher import TeacherModel
from cls2det.synthdata.crops import batch_gt_crops
from cls2det.synthdata.dataset_io import DetectionDataset
from cls2det.utils.checkpoint import Checkpoint, load_checkpoint, load_into, model_params, save_checkpoint
from cls2det.utils.geometry import flip_boxes_horizontal
from cls2det.utils.logger import get_logger, setup_logger
from .objective import LossBreakdown, loss_breakdown
from .optimizer import OptimizerState, sgd_step, step_decay_epochs
from .prefetch import batch_rng, batch_slices, flip_mask, prefetch
from .run_log import STUDENT_KEYS, RunLog

setup_logger()
logger = get_logger()

STUDENT_STREAM = 4


@dataclass
class TrainRunConfig:
    epochs: int = 12
    batch_size: int = 16
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    head_kind: str = CATEGORICAL
    kd_cls: bool = False
    kd_loc: bool = False
    kd_loc0: bool = False
    teacher_path: Optional[str] = None
    flip: bool = True
    channels: Tuple[int, int, int] = (16, 32, 32)
    anchor_scales: Tuple[float, ...] = (12.0, 22.0)
    anchor_ratios: Tuple[float, ...] = (1.0,)
    pos_iou: float = 0.5
    neg_iou: float = 0.4

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.anchor_scales = tuple(float(s) for s in self.anchor_scales)
        self.anchor_ratios = tuple(float(r) for r in self.anchor_ratios)
        self.validate()

    def validate(self) -> "TrainRunConfig":
        if self.head_kind not in HEAD_KINDS:
            raise ConfigError(f"unknown head kind {self.head_kind!r}; choose from {list(HEAD_KINDS)}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(f"epochs and batch size must be >= 1, got {self.epochs}, {self.batch_size}")
        if not 0.0 <= self.neg_iou <= self.pos_iou <= 1.0:
            raise ConfigError(f"need 0 <= neg_iou <= pos_iou <= 1, got {self.neg_iou}, {self.pos_iou}")
        return self

    @property
    def needs_teacher(self) -> bool:
        return self.kd_cls or self.kd_loc

    @property
    def distilling(self) -> bool:
        return self.kd_cls or self.kd_loc or self.kd_loc0

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("channels", "anchor_scales", "anchor_ratios"):
            d[key] = list(d[key])
        return d


@dataclass
class StudentResult:
    model: StudentDetector
    history: List[Dict] = field(default_factory=list)
    final_metrics: Optional[CocoMetrics] = None
    checkpoint: Optional[Path] = None
    teacher_checksum: Optional[str] = None


@dataclass
class PositiveSet:
    """Batch-flattened positives: row in the [N*A] head outputs, owning image, anchor, matched object."""
    rows: np.ndarray
    image_index: np.ndarray
    anchor_index: np.ndarray
    gt_index: np.ndarray
    gt_boxes: np.ndarray

    @property
    def count(self) -> int:
        return int(self.rows.shape[0])


def build_student(num_classes: int, image_size: int, cfg: TrainRunConfig) -> StudentDetector:
    return StudentDetector(num_classes, cfg.head_kind, image_size, cfg.channels, cfg.anchor_scales,
                           cfg.anchor_ratios, seed=cfg.seed)


def check_teacher(cfg: TrainRunConfig, teacher: Optional[TeacherModel], num_classes: int):
    if cfg.needs_teacher and teacher is None:
        raise ConfigError("--kd-cls / --kd-loc need a teacher checkpoint (--teacher); --kd-loc0 alone runs without one")
    if teacher is not None and teacher.num_classes != num_classes:
        raise ConfigError(f"teacher has {teacher.num_classes} classes, dataset {num_classes}")


def _int_concat(parts) -> np.ndarray:
    return np.concatenate(parts).astype(np.int64) if parts else np.zeros(0, dtype=np.int64)


def positive_set(assignments: Sequence[AnchorAssignment], num_anchors: int) -> PositiveSet:
    rows, images, anchors, gts, boxes = [], [], [], [], []
    for b, asg in enumerate(assignments):
        rows.append(b * num_anchors + asg.positive_indices)
        images.append(np.full(asg.num_positives, b, dtype=np.int64))
        anchors.append(asg.positive_indices)
        gts.append(asg.matched_gt)
        boxes.append(asg.matched_boxes)
    return PositiveSet(_int_concat(rows), _int_concat(images), _int_concat(anchors), _int_concat(gts),
                       np.concatenate(boxes).reshape(-1, 4) if boxes else np.zeros((0, 4)))


def teacher_logits_for(teacher: TeacherModel, images: np.ndarray, pos: PositiveSet) -> np.ndarray:
    """Teacher logits [K, C] of each positive's ground-truth object; every object is cropped once."""
    keys = np.stack([pos.image_index, pos.gt_index], axis=1)
    uniq, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    crops = batch_gt_crops(images, uniq[:, 0], pos.gt_boxes[first], teacher.input_size)
    with no_grad():
        logits, _ = teacher.forward(DiffTensor(crops))
    return logits.data[np.asarray(inverse).reshape(-1)]


def batch_losses(student: StudentDetector, teacher: Optional[TeacherModel], images: np.ndarray,
                 gt_boxes: Sequence[np.ndarray], gt_labels: Sequence[np.ndarray], cfg: TrainRunConfig,
                 distill: DistillConfig) -> LossBreakdown:
    n = images.shape[0]
    cls_logits, offsets = student.forward(DiffTensor(images))
    assignments = [assign_anchors(student.anchors, gt_boxes[b], gt_labels[b], cfg.pos_iou, cfg.neg_iou)
                   for b in range(n)]
    det = detection_loss(cls_logits, offsets, assignments, student.anchors, student.head_kind)
    a, d = student.num_anchors, student.num_logits
    pos = positive_set(assignments, a)

    kd_cls_term = None
    if cfg.kd_cls:
        if pos.count:
            student_pos = ops.take(ops.reshape(cls_logits, (n * a, d)), pos.rows, axis=0)
            kd_cls_term = kd_cls_loss(student_pos, teacher_logits_for(teacher, images, pos), student.head_kind,
                                      distill.temperature)
        else:
            kd_cls_term = DiffTensor(0.0)

    kd_loc_term = None
    if cfg.kd_loc or cfg.kd_loc0:
        kd_loc_term = DiffTensor(0.0)
        if pos.count:
            pos_offsets = ops.take(ops.reshape(offsets, (n * a, 4)), pos.rows, axis=0)
            pred = decode_boxes(student.anchors[pos.anchor_index], pos_offsets)
            keep = np.flatnonzero(valid_box_mask(pred.data, student.image_size, student.image_size))
            if keep.shape[0] < pos.count:
                logger.debug(f"dropped {pos.count - keep.shape[0]} degenerate predicted box(es) from kd_loc")
            if keep.shape[0]:
                kd_loc_term = kd_loc_loss(ops.take(pred, keep, axis=0), pos.gt_boxes[keep], DiffTensor(images),
                                          teacher, distill, pos.image_index[keep], use_features=cfg.kd_loc,
                                          use_pixels=cfg.kd_loc0 or (cfg.kd_loc and distill.uses_pixels))
    return loss_breakdown(det.total, kd_cls_term, kd_loc_term, distill)


def _batch_maker(dataset: DetectionDataset, batches: List[np.ndarray], cfg: TrainRunConfig, epoch: int):
    size = float(dataset.image_size)

    def make(b: int):
        idx = batches[b]
        images = dataset.images[idx].copy()
        boxes = [dataset.annotations[i].boxes for i in idx]
        labels = [dataset.annotations[i].labels for i in idx]
        if cfg.flip:
            flips = flip_mask(batch_rng(cfg.seed, epoch, b, STUDENT_STREAM), idx.shape[0])
            for j in np.flatnonzero(flips):
                images[j] = images[j][..., ::-1]
                boxes[j] = flip_boxes_horizontal(boxes[j], size)
        return images, boxes, labels

    return make


def train_student(train_set: DetectionDataset, val_set: DetectionDataset, cfg: TrainRunConfig,
                  distill: Optional[DistillConfig] = None, teacher: Optional[TeacherModel] = None,
                  out_path: Optional[Path] = None, log_dir: Optional[Path] = None,
                  eval_cfg: Optional[EvalConfig] = None, dataset_hash: str = "") -> StudentResult:
    distill = distill or DistillConfig()
    eval_cfg = eval_cfg or EvalConfig()
    check_teacher(cfg, teacher, train_set.num_classes)
    if train_set.image_size != val_set.image_size:
        raise ConfigError(f"train images are {train_set.image_size}px, val {val_set.image_size}px")
    if teacher is not None:
        teacher.freeze()
    checksum = teacher.checksum() if teacher is not None else None

    model = build_student(train_set.num_classes, train_set.image_size, cfg)
    state = OptimizerState(cfg.lr, cfg.momentum, step_decay_epochs(cfg.epochs))
    run_log = RunLog(log_dir, STUDENT_KEYS) if log_dir is not None else None
    result = StudentResult(model, teacher_checksum=checksum)
    terms = [name for name, on in (("kd_cls", cfg.kd_cls), ("kd_loc", cfg.kd_loc), ("kd_loc0", cfg.kd_loc0)) if on]
    logger.info(f"Training {cfg.head_kind} student on {len(train_set)} scenes for {cfg.epochs} epochs, "
                f"distillation: {', '.join(terms) or 'none'}")

    for epoch in range(cfg.epochs):
        lr = state.set_epoch(epoch)
        order = batch_rng(cfg.seed, epoch, -1, STUDENT_STREAM).permutation(len(train_set))
        batches = batch_slices(order, cfg.batch_size)
        sums = {"loss_det": 0.0, "loss_kd_cls": 0.0, "loss_kd_loc": 0.0}
        for b, (images, boxes, labels) in enumerate(prefetch(_batch_maker(train_set, batches, cfg, epoch), len(batches))):
            try:
                losses = batch_losses(model, teacher, images, boxes, labels, cfg, distill)
            except NumericalError as e:
                raise NumericalError(f"epoch {epoch + 1}, batch {b}: {e}") from e
            backward(losses.total)
            sgd_step(model.params, state)
            sums["loss_det"] += losses.det
            sums["loss_kd_cls"] += losses.kd_cls
            sums["loss_kd_loc"] += losses.kd_loc
            logger.debug(f"epoch {epoch + 1} batch {b}: loss {losses.total.item():.5f}")

        metrics, _, _ = evaluate_model(model, val_set, eval_cfg)
        record = {k: v / len(batches) for k, v in sums.items()}
        record.update({"epoch": epoch + 1, "val_mAP": metrics.mAP, "val_AP50": metrics.AP50,
                       "val_AP75": metrics.AP75, "lr": lr})
        result.history.append(record)
        result.final_metrics = metrics
        if run_log is not None:
            run_log.append(record)
        logger.info(f"student epoch {epoch + 1}/{cfg.epochs}: det {record['loss_det']:.4f} "
                    f"kd_cls {record['loss_kd_cls']:.4f} kd_loc {record['loss_kd_loc']:.4f} "
                    f"val mAP {metrics.mAP:.4f} AP50 {metrics.AP50:.4f}")

    if teacher is not None and teacher.checksum() != checksum:
        raise NumericalError("teacher parameters changed during student training")
    if run_log is not None:
        run_log.write_summary()
    if out_path is not None:
        config = {"run": cfg.to_dict(), "distill": distill.to_dict()}
        ckpt = Checkpoint(model_params(model), "student", model.architecture, config, dataset_hash)
        result.checkpoint = save_checkpoint(out_path, ckpt)
    return result


def load_student(path: Path) -> StudentDetector:
    ckpt = load_checkpoint(path)
    if ckpt.kind and ckpt.kind != "student":
        raise ConfigError(f"{path} holds a {ckpt.kind} checkpoint, not a student")
    if not ckpt.architecture:
        raise ConfigError(f"{path} has no architecture metadata")
    return load_into(StudentDetector.from_architecture(ckpt.architecture), ckpt.params)
