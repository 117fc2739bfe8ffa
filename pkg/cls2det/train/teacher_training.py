"""
teacher_training.py - Train the classification teacher on object crops and keep the best-on-val weights
"""

from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from cls2det.diffmath.sampling import resize_bilinear
from cls2det.diffmath.tensor import DiffTensor, backward
from cls2det.errors import ConfigError, NumericalError
from cls2det.models.detection_loss import TEACHER_LOSSES, teacher_classification_loss
from cls2det.models.teacher import TeacherModel, predict_labels
from cls2det.synthdata.dataset_io import ClassificationDataset
from cls2det.utils.checkpoint import Checkpoint, load_checkpoint, load_into, model_params, save_checkpoint
from cls2det.utils.logger import get_logger, setup_logger
from .optimizer import OptimizerState, sgd_step, step_decay_epochs
from .prefetch import batch_rng, batch_slices, flip_mask, prefetch
from .run_log import TEACHER_KEYS, RunLog

setup_logger()
logger = get_logger()

TEACHER_STREAM = 3


@dataclass
class TeacherRunConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    loss_kind: str = "categorical"
    input_size: int = 32
    channels: Tuple[int, int] = (16, 32)
    flip: bool = True

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.validate()

    def validate(self) -> "TeacherRunConfig":
        if self.loss_kind not in TEACHER_LOSSES:
            raise ConfigError(f"unknown teacher loss {self.loss_kind!r}; choose from {list(TEACHER_LOSSES)}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(f"epochs and batch size must be >= 1, got {self.epochs}, {self.batch_size}")
        if self.input_size < 4:
            raise ConfigError(f"teacher input size must be >= 4, got {self.input_size}")
        if len(self.channels) != 2:
            raise ConfigError(f"teacher takes two channel widths, got {list(self.channels)}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d


@dataclass
class TeacherResult:
    model: TeacherModel
    history: List[Dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_top1: float = 0.0
    checkpoint: Optional[Path] = None


def fit_crops(crops: np.ndarray, size: int) -> np.ndarray:
    """Resize [N, C, s, s] crops to the teacher input size (no-op when they already match)."""
    if crops.shape[-1] == size and crops.shape[-2] == size:
        return crops
    return np.stack([resize_bilinear(c, (size, size)) for c in crops]) if len(crops) else \
        np.zeros((0, crops.shape[1], size, size))


def top1_accuracy(model: TeacherModel, crops: np.ndarray, labels: np.ndarray) -> float:
    if labels.shape[0] == 0:
        return 0.0
    return float(np.mean(predict_labels(model, crops) == labels))


def train_teacher(train_set: ClassificationDataset, val_set: ClassificationDataset, cfg: TeacherRunConfig,
                  out_path: Optional[Path] = None, log_dir: Optional[Path] = None,
                  dataset_hash: str = "") -> TeacherResult:
    """
    Minibatch SGD on one of the teacher losses. Records per-epoch train / val top-1 and
    keeps the parameters of the best validation epoch (earliest on ties).
    """
    if train_set.num_classes != val_set.num_classes:
        raise ConfigError(f"train has {train_set.num_classes} classes, val {val_set.num_classes}")
    if len(train_set) == 0:
        raise ConfigError("teacher training set is empty")
    x_train = fit_crops(train_set.crops, cfg.input_size)
    x_val = fit_crops(val_set.crops, cfg.input_size)
    y_train = train_set.labels.astype(np.int64)
    y_val = val_set.labels.astype(np.int64)

    model = TeacherModel(train_set.num_classes, cfg.input_size, cfg.channels, x_train.shape[1], cfg.seed)
    state = OptimizerState(cfg.lr, cfg.momentum, step_decay_epochs(cfg.epochs))
    run_log = RunLog(log_dir, TEACHER_KEYS) if log_dir is not None else None
    result = TeacherResult(model)
    best_params = None
    logger.info(f"Training {cfg.loss_kind} teacher on {len(train_set)} crops ({train_set.num_classes} classes), "
                f"{cfg.epochs} epochs")

    for epoch in range(cfg.epochs):
        lr = state.set_epoch(epoch)
        order = batch_rng(cfg.seed, epoch, -1, TEACHER_STREAM).permutation(len(train_set))
        batches = batch_slices(order, cfg.batch_size)

        def make(b: int):
            idx = batches[b]
            x = x_train[idx].copy()
            if cfg.flip:
                flips = flip_mask(batch_rng(cfg.seed, epoch, b, TEACHER_STREAM), idx.shape[0])
                x[flips] = x[flips][..., ::-1]
            return x, y_train[idx]

        loss_sum, correct = 0.0, 0
        for b, (x, y) in enumerate(prefetch(make, len(batches))):
            logits, _ = model.forward(DiffTensor(x))
            loss = teacher_classification_loss(logits, y, cfg.loss_kind)
            if not np.isfinite(loss.data).all():
                raise NumericalError(f"teacher loss is not finite at epoch {epoch}, batch {b}")
            backward(loss)
            sgd_step(model.params, state)
            loss_sum += loss.item() * y.shape[0]
            correct += int(np.sum(logits.data.argmax(axis=1) == y))

        val_top1 = top1_accuracy(model, x_val, y_val)
        record = {"epoch": epoch + 1, "loss": loss_sum / len(train_set), "train_top1": correct / len(train_set),
                  "val_top1": val_top1, "lr": lr}
        result.history.append(record)
        if run_log is not None:
            run_log.append(record)
        logger.info(f"teacher epoch {epoch + 1}/{cfg.epochs}: loss {record['loss']:.4f} "
                    f"train {record['train_top1']:.3f} val {val_top1:.3f}")
        if best_params is None or val_top1 > result.best_val_top1:
            result.best_epoch, result.best_val_top1 = epoch + 1, val_top1
            best_params = OrderedDict((n, p.data.copy()) for n, p in model.params.items())

    load_into(model, best_params)
    model.freeze()
    if run_log is not None:
        run_log.write_summary()
    if out_path is not None:
        ckpt = Checkpoint(model_params(model), "teacher", model.architecture, cfg.to_dict(), dataset_hash)
        result.checkpoint = save_checkpoint(out_path, ckpt)
    logger.info(f"Best teacher: epoch {result.best_epoch}, val top-1 {result.best_val_top1:.3f}")
    return result


def load_teacher(path: Path) -> TeacherModel:
    ckpt = load_checkpoint(path)
    if ckpt.kind and ckpt.kind != "teacher":
        raise ConfigError(f"{path} holds a {ckpt.kind} checkpoint, not a teacher")
    if not ckpt.architecture:
        raise ConfigError(f"{path} has no architecture metadata")
    model = TeacherModel.from_architecture(ckpt.architecture)
    return load_into(model, ckpt.params).freeze()
