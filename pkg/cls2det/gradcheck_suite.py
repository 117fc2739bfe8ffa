"""
gradcheck_suite.py - Registry of finite-difference checks for every differentiable operation and loss

Each check builds random inputs from a seed and returns the worst relative error of
grad_check_inputs. Inputs are drawn away from kinks (relu / abs at 0, clip bounds,
smooth-L1 at beta, ties in max) and sampling checks run on linear ramp images, where
bilinear interpolation is exact, so the finite differences never straddle a corner.
"""

from typing import Callable, Dict, Iterable, Optional

import numpy as np
import pandas as pd

from cls2det.diffmath import ops
from cls2det.diffmath.gradcheck import grad_check, grad_check_inputs
from cls2det.diffmath.layers import conv2d, linear_map
from cls2det.diffmath.sampling import adaptive_avg_pool
from cls2det.diffmath.tensor import DiffTensor
from cls2det.distill.config import DistillConfig
from cls2det.distill.kd_cls import BINARY, CATEGORICAL, kd_cls_loss
from cls2det.distill.kd_loc import crop_boxes, kd_loc_feature_loss, kd_loc_pixel_loss
from cls2det.errors import ConfigError, NumericalError
from cls2det.models.anchors import anchor_array, assign_anchors, decode_boxes, encode_boxes
from cls2det.models.detection_loss import detection_loss
from cls2det.models.teacher import TeacherModel
from cls2det.train.objective import total_loss
from cls2det.utils.logger import get_logger, setup_logger

setup_logger()
logger = get_logger()

DEFAULT_THRESHOLD = 1e-3
DEFAULT_SEEDS = 20
EPS = 1e-4

GradCheck = Callable[[int], float]
GRADCHECKS: Dict[str, GradCheck] = {}


def register(name: str):
    def wrap(fn: GradCheck) -> GradCheck:
        GRADCHECKS[name] = fn
        return fn
    return wrap


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def _projector(rng: np.random.Generator, shape):
    """Fixed random weights turning a tensor output into a scalar with a non-trivial gradient."""
    w = DiffTensor(rng.standard_normal(shape))
    return lambda out: ops.sum_(ops.mul(out, w))


def _away_from_zero(rng: np.random.Generator, shape, gap: float = 0.1) -> np.ndarray:
    return np.where(rng.random(shape) < 0.5, -1.0, 1.0) * (gap + rng.random(shape))


def _ramp_images(rng: np.random.Generator, n: int, c: int, size: int) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    out = np.empty((n, c, size, size))
    for i in range(n):
        for ch in range(c):
            a, b, off = rng.uniform(-0.05, 0.05, size=3)
            out[i, ch] = 0.5 + off + a * xs + b * ys
    return out


def _unary(seed: int, op, make_x) -> float:
    rng = _rng(seed)
    x = DiffTensor(make_x(rng))
    proj = _projector(rng, op(x).shape)
    return grad_check(lambda t: proj(op(t)), x, eps=EPS)


def _binary(seed: int, op) -> float:
    rng = _rng(seed)
    a, b = DiffTensor(rng.standard_normal((3, 4))), DiffTensor(rng.standard_normal((3, 4)))
    proj = _projector(rng, (3, 4))
    return grad_check_inputs(lambda p, q: proj(op(p, q)), [a, b], eps=EPS)


@register("add")
def check_add(seed: int) -> float:
    return _binary(seed, ops.add)


@register("sub")
def check_sub(seed: int) -> float:
    return _binary(seed, ops.sub)


@register("mul")
def check_mul(seed: int) -> float:
    return _binary(seed, ops.mul)


@register("scale")
def check_scale(seed: int) -> float:
    return _unary(seed, lambda t: ops.scale(t, -1.7), lambda r: r.standard_normal((3, 4)))


@register("neg")
def check_neg(seed: int) -> float:
    return _unary(seed, ops.neg, lambda r: r.standard_normal((3, 4)))


@register("exp")
def check_exp(seed: int) -> float:
    return _unary(seed, ops.exp, lambda r: r.uniform(-1.0, 1.0, (3, 4)))


@register("log")
def check_log(seed: int) -> float:
    return _unary(seed, ops.log, lambda r: r.uniform(0.5, 2.0, (3, 4)))


@register("relu")
def check_relu(seed: int) -> float:
    return _unary(seed, ops.relu, lambda r: _away_from_zero(r, (3, 4)))


@register("absolute")
def check_absolute(seed: int) -> float:
    return _unary(seed, ops.absolute, lambda r: _away_from_zero(r, (3, 4)))


@register("power")
def check_power(seed: int) -> float:
    return _unary(seed, lambda t: ops.power(t, 2.5), lambda r: r.uniform(0.5, 2.0, (3, 4)))


@register("clip")
def check_clip(seed: int) -> float:
    def make(r):
        x = r.uniform(-0.4, 0.4, (3, 4))
        outside = r.random((3, 4)) < 0.4
        return np.where(outside, np.sign(x) * (0.6 + np.abs(x)), x)
    return _unary(seed, lambda t: ops.clip(t, -0.5, 0.5), make)


@register("smooth_l1")
def check_smooth_l1(seed: int) -> float:
    def make(r):
        x = r.uniform(-0.8, 0.8, (3, 4))
        linear = r.random((3, 4)) < 0.5
        return np.where(linear, np.sign(x) * (1.2 + np.abs(x)), x)
    return _unary(seed, lambda t: ops.smooth_l1(t, 1.0), make)


@register("sum")
def check_sum(seed: int) -> float:
    return _unary(seed, lambda t: ops.sum_(t, axes=1), lambda r: r.standard_normal((3, 4)))


@register("mean")
def check_mean(seed: int) -> float:
    return _unary(seed, lambda t: ops.mean(t, axes=(0, 2)), lambda r: r.standard_normal((2, 3, 4)))


@register("max")
def check_max(seed: int) -> float:
    def make(r):
        return r.permutation(12).reshape(3, 4) * 0.1 + r.uniform(0.0, 0.01, (3, 4))
    return _unary(seed, lambda t: ops.max_(t, axes=1), make)


@register("softmax_t")
def check_softmax_t(seed: int) -> float:
    return _unary(seed, lambda t: ops.softmax_t(t, 2.0), lambda r: 2.0 * r.standard_normal((3, 5)))


@register("log_softmax_t")
def check_log_softmax_t(seed: int) -> float:
    return _unary(seed, lambda t: ops.log_softmax_t(t, 2.0), lambda r: 2.0 * r.standard_normal((3, 5)))


@register("sigmoid_t")
def check_sigmoid_t(seed: int) -> float:
    return _unary(seed, lambda t: ops.sigmoid_t(t, 2.0), lambda r: 2.0 * r.standard_normal((3, 5)))


@register("log_sigmoid_t")
def check_log_sigmoid_t(seed: int) -> float:
    return _unary(seed, lambda t: ops.log_sigmoid_t(t, 2.0), lambda r: 2.0 * r.standard_normal((3, 5)))


@register("reshape_transpose")
def check_reshape_transpose(seed: int) -> float:
    return _unary(seed, lambda t: ops.transpose(ops.reshape(t, (2, 3, 2)), (2, 0, 1)),
                  lambda r: r.standard_normal((3, 4)))


@register("index_take_concat_stack")
def check_index_take_concat_stack(seed: int) -> float:
    def op(t):
        picked = ops.take(t, np.array([2, 0, 2]), axis=0)
        joined = ops.concat([picked, ops.index(t, (slice(0, 1),))], axis=0)
        return ops.stack([joined, ops.scale(joined, 2.0)], axis=0)
    return _unary(seed, op, lambda r: r.standard_normal((3, 4)))


@register("linear_map")
def check_linear_map(seed: int) -> float:
    rng = _rng(seed)
    x, w, b = (DiffTensor(rng.standard_normal(s)) for s in ((3, 4), (4, 5), (5,)))
    proj = _projector(rng, (3, 5))
    return grad_check_inputs(lambda p, q, r: proj(linear_map(p, q, r)), [x, w, b], eps=EPS)


@register("conv2d")
def check_conv2d(seed: int) -> float:
    rng = _rng(seed)
    x, k, b = (DiffTensor(rng.standard_normal(s)) for s in ((1, 2, 5, 5), (3, 2, 3, 3), (3,)))
    proj = _projector(rng, conv2d(x, k, stride=2, pad=1, bias=b).shape)
    return grad_check_inputs(lambda p, q, r: proj(conv2d(p, q, stride=2, pad=1, bias=r)), [x, k, b], eps=EPS)


@register("decode_boxes")
def check_decode_boxes(seed: int) -> float:
    anchors = anchor_array(16, 8, (8.0,), (1.0,))
    return _unary(seed, lambda t: decode_boxes(anchors, t), lambda r: r.uniform(-1.0, 1.0, (anchors.shape[0], 4)))


def _inner_boxes(rng: np.random.Generator, k: int, size: int, margin: float = 2.0) -> np.ndarray:
    x1 = rng.uniform(margin, size / 2 - 1, k)
    y1 = rng.uniform(margin, size / 2 - 1, k)
    x2 = rng.uniform(size / 2 + 1, size - margin, k)
    y2 = rng.uniform(size / 2 + 1, size - margin, k)
    return np.stack([x1, y1, x2, y2], axis=1)


@register("spatial_transform_crop")
def check_spatial_transform_crop(seed: int) -> float:
    rng = _rng(seed)
    images = DiffTensor(_ramp_images(rng, 1, 2, 12))
    boxes = DiffTensor(_inner_boxes(rng, 2, 12))
    proj = _projector(rng, (2, 2, 4, 4))
    return grad_check_inputs(lambda im, bx: proj(crop_boxes(im, bx, [0, 0], 4)), [images, boxes], eps=EPS)


@register("adaptive_avg_pool")
def check_adaptive_avg_pool(seed: int) -> float:
    return _unary(seed, lambda t: adaptive_avg_pool(t, 3, 2), lambda r: r.standard_normal((1, 2, 7, 5)))


def _kd_cls(seed: int, head_kind: str) -> float:
    rng = _rng(seed)
    k, c = 3, 4
    d = c + 1 if head_kind == CATEGORICAL else c
    teacher = 2.0 * rng.standard_normal((k, c))
    student = DiffTensor(2.0 * rng.standard_normal((k, d)))
    return grad_check(lambda s: kd_cls_loss(s, teacher, head_kind, 2.0), student, eps=EPS)


@register("kd_cls_loss_categorical")
def check_kd_cls_categorical(seed: int) -> float:
    return _kd_cls(seed, CATEGORICAL)


@register("kd_cls_loss_binary")
def check_kd_cls_binary(seed: int) -> float:
    return _kd_cls(seed, BINARY)


def _kd_loc_inputs(seed: int, size: int = 16):
    rng = _rng(seed)
    images = DiffTensor(_ramp_images(rng, 1, 3, size))
    gt = _inner_boxes(rng, 2, size, margin=3.0)
    pred = DiffTensor(gt + rng.uniform(-1.0, 1.0, gt.shape))
    return rng, images, gt, pred


@register("kd_loc_feature_loss")
def check_kd_loc_feature_loss(seed: int) -> float:
    rng, images, gt, pred = _kd_loc_inputs(seed)
    teacher = TeacherModel(4, seed=seed)
    # keeps every l1 pre-activation positive on the ramp crops
    teacher.params["l1.bias"].data = teacher.params["l1.bias"].data + 10.0
    teacher.freeze()
    cfg = DistillConfig(sampling_size=8, pool_w=2, pool_h=2, layer_set=("l1",))
    return grad_check(lambda p: kd_loc_feature_loss(p, gt, images, teacher, cfg, [0, 0]), pred, eps=EPS)


@register("kd_loc_pixel_loss")
def check_kd_loc_pixel_loss(seed: int) -> float:
    _, images, gt, pred = _kd_loc_inputs(seed)
    cfg = DistillConfig(sampling_size=8, pool_w=2, pool_h=2, layer_set=("l0",))
    return grad_check(lambda p: kd_loc_pixel_loss(p, gt, images, cfg, [0, 0]), pred, eps=EPS)


def _detection(seed: int, head_kind: str) -> float:
    rng = _rng(seed)
    anchors = anchor_array(16, 4, (6.0,), (1.0,))
    asg = assign_anchors(anchors, np.array([[1.0, 1.0, 7.0, 7.0], [8.0, 9.0, 14.0, 15.0]]), np.array([0, 2]))
    d = 4 if head_kind == CATEGORICAL else 3
    logits = DiffTensor(rng.standard_normal((1, anchors.shape[0], d)))
    offsets = rng.uniform(-0.5, 0.5, (1, anchors.shape[0], 4))
    targets = encode_boxes(anchors[asg.positive_indices], asg.matched_boxes)
    offsets[0, asg.positive_indices] = targets + rng.uniform(-0.4, 0.4, targets.shape)
    return grad_check_inputs(lambda z, o: detection_loss(z, o, [asg], anchors, head_kind).total,
                             [logits, DiffTensor(offsets)], eps=EPS)


@register("detection_loss_categorical")
def check_detection_loss_categorical(seed: int) -> float:
    return _detection(seed, CATEGORICAL)


@register("detection_loss_binary")
def check_detection_loss_binary(seed: int) -> float:
    return _detection(seed, BINARY)


@register("total_loss")
def check_total_loss(seed: int) -> float:
    rng = _rng(seed)
    w = DiffTensor(rng.standard_normal(4))
    cfg = DistillConfig(lambda_kc=0.4, lambda_kl=1.0)

    def f(x):
        return total_loss(ops.sum_(ops.mul(x, x)), ops.sum_(ops.exp(x)), ops.sum_(ops.mul(x, w)), cfg)
    return grad_check(f, DiffTensor(rng.uniform(-1.0, 1.0, 4)), eps=EPS)


def run_gradchecks(seeds: int = DEFAULT_SEEDS, base_seed: int = 0, only: Optional[Iterable[str]] = None,
                   threshold: float = DEFAULT_THRESHOLD, checks: Optional[Dict[str, GradCheck]] = None) -> pd.DataFrame:
    """One row per check: worst relative error over `seeds` seeds and whether it is below threshold."""
    checks = GRADCHECKS if checks is None else checks
    names = list(checks)
    if only:
        wanted = list(only)
        unknown = [n for n in wanted if n not in checks]
        if unknown:
            raise ConfigError(f"unknown gradient check(s) {unknown}; available: {sorted(checks)}")
        names = wanted
    rows = []
    for name in names:
        worst = 0.0
        for i in range(seeds):
            try:
                err = checks[name](base_seed + i)
            except NumericalError as e:
                logger.warning(f"gradcheck {name}, seed {base_seed + i}: {e}")
                err = np.inf
            worst = max(worst, err) if np.isfinite(err) else np.inf
        passed = bool(worst < threshold)
        rows.append({"op": name, "seeds": seeds, "max_rel_error": worst, "passed": passed})
        logger.debug(f"gradcheck {name}: {worst:.3e} ({'ok' if passed else 'FAIL'})")
    return pd.DataFrame(rows, columns=["op", "seeds", "max_rel_error", "passed"])
