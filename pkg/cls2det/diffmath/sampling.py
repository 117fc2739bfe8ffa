"""
sampling.py - Affine grid sampling (spatial transformer), adaptive average pooling, crop resizing

Coordinate conventions used throughout:
    normalized coordinates span [-1, 1] over the image edges;
    output cell u of an s-sample grid sits at -1 + (2u + 1) / s;
    normalized x maps to pixel index ((x + 1) W - 1) / 2, so pixel j is centred at j.
"""

import math
from typing import Tuple

import numpy as np

from cls2det.errors import ShapeError
from .tensor import DiffTensor, record


def grid_coordinates(s: int) -> np.ndarray:
    """Cell-centre sample positions of an s-point grid in normalized coordinates."""
    return -1.0 + (2.0 * np.arange(s) + 1.0) / s


def _bilinear_corners(ix: np.ndarray, iy: np.ndarray, h: int, w: int):
    x0 = np.floor(ix).astype(np.int64)
    y0 = np.floor(iy).astype(np.int64)
    wx = ix - x0
    wy = iy - y0
    corners = []
    for dy, dx in ((0, 0), (0, 1), (1, 0), (1, 1)):
        xc, yc = x0 + dx, y0 + dy
        valid = (xc >= 0) & (xc < w) & (yc >= 0) & (yc < h)
        corners.append((np.clip(yc, 0, h - 1), np.clip(xc, 0, w - 1), valid))
    return corners, wx, wy


def affine_grid_sample(images: DiffTensor, theta: DiffTensor, image_index, s: int) -> DiffTensor:
    """
    Sample an s x s grid from images[image_index[k]] through theta[k] (2x3) for every k.

    images: [N, C, H, W]; theta: [K, 2, 3]; returns [K, C, s, s].
    Bilinear interpolation; samples outside the image read as zero.
    Differentiable w.r.t. both images and theta.
    """
    if images.ndim != 4:
        raise ShapeError(f"images must be [N,C,H,W], got {images.shape}")
    if theta.ndim != 3 or theta.shape[1:] != (2, 3):
        raise ShapeError(f"theta must be [K,2,3], got {theta.shape}")
    if s < 2:
        raise ShapeError(f"grid sampling size must be >= 2, got {s}")
    idx = np.asarray(image_index, dtype=np.int64).reshape(-1)
    k = theta.shape[0]
    if idx.shape[0] != k:
        raise ShapeError(f"{idx.shape[0]} image indices for {k} transforms")
    n, c, h, w = images.shape
    if k and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError(f"image index out of range for a batch of {n}")

    g = grid_coordinates(s)
    xo = g[None, None, :]
    yo = g[None, :, None]
    t = theta.data
    x_in = t[:, 0, 0, None, None] * xo + t[:, 0, 1, None, None] * yo + t[:, 0, 2, None, None]
    y_in = t[:, 1, 0, None, None] * xo + t[:, 1, 1, None, None] * yo + t[:, 1, 2, None, None]
    ix = ((x_in + 1.0) * w - 1.0) / 2.0
    iy = ((y_in + 1.0) * h - 1.0) / 2.0
    corners, wx, wy = _bilinear_corners(ix, iy, h, w)
    bidx = np.broadcast_to(idx[:, None, None], ix.shape)

    # corner values [K, s, s, C], zero where the corner falls outside the image
    values = [images.data[bidx, :, yc, xc] * valid[..., None] for yc, xc, valid in corners]
    v00, v01, v10, v11 = values
    wx_ = wx[..., None]
    wy_ = wy[..., None]
    out = ((1 - wy_) * ((1 - wx_) * v00 + wx_ * v01) + wy_ * ((1 - wx_) * v10 + wx_ * v11))

    def backward(grad):
        gt = grad.transpose(0, 2, 3, 1)
        dimages = np.zeros_like(images.data)
        weights = ((1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx)
        for (yc, xc, valid), wgt in zip(corners, weights):
            np.add.at(dimages, (bidx, slice(None), yc, xc), gt * (wgt * valid)[..., None])
        dix = (gt * ((1 - wy_) * (v01 - v00) + wy_ * (v11 - v10))).sum(axis=-1)
        diy = (gt * ((1 - wx_) * (v10 - v00) + wx_ * (v11 - v01))).sum(axis=-1)
        dx_in = dix * (w / 2.0)
        dy_in = diy * (h / 2.0)
        dtheta = np.empty((k, 2, 3))
        dtheta[:, 0, 0] = (dx_in * xo).sum(axis=(1, 2))
        dtheta[:, 0, 1] = (dx_in * yo).sum(axis=(1, 2))
        dtheta[:, 0, 2] = dx_in.sum(axis=(1, 2))
        dtheta[:, 1, 0] = (dy_in * xo).sum(axis=(1, 2))
        dtheta[:, 1, 1] = (dy_in * yo).sum(axis=(1, 2))
        dtheta[:, 1, 2] = dy_in.sum(axis=(1, 2))
        return dimages, dtheta

    return record("affine_grid_sample", out.transpose(0, 3, 1, 2), (images, theta), backward)


def pool_windows(size_in: int, size_out: int):
    """[floor(i*in/out), ceil((i+1)*in/out)) for every output index i."""
    return [(math.floor(i * size_in / size_out), math.ceil((i + 1) * size_in / size_out))
            for i in range(size_out)]


def adaptive_avg_pool(x: DiffTensor, out_h: int, out_w: int) -> DiffTensor:
    """Average-pool the last two axes to out_h x out_w; leading axes are pooled independently."""
    if x.ndim < 2:
        raise ShapeError(f"adaptive_avg_pool needs at least 2 dims, got {x.shape}")
    h_in, w_in = x.shape[-2:]
    if out_h < 1 or out_w < 1 or out_h > h_in or out_w > w_in:
        raise ShapeError(f"cannot pool {h_in}x{w_in} to {out_h}x{out_w}")
    rows = pool_windows(h_in, out_h)
    cols = pool_windows(w_in, out_w)
    out = np.empty(x.shape[:-2] + (out_h, out_w))
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            out[..., i, j] = x.data[..., r0:r1, c0:c1].mean(axis=(-2, -1))

    def backward(g):
        dx = np.zeros_like(x.data)
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                area = (r1 - r0) * (c1 - c0)
                dx[..., r0:r1, c0:c1] += g[..., i, j, None, None] / area
        return (dx,)

    return record("adaptive_avg_pool", out, (x,), backward)


def resize_bilinear(image: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    """
    Corner-aligned bilinear resize of a [C, H, W] array to [C, out_h, out_w].
    The first and last output samples sit exactly on the first and last input pixels.
    """
    c, h, w = image.shape
    out_h, out_w = size

    def axis_weights(n_in, n_out):
        if n_out == 1 or n_in == 1:
            pos = np.full(n_out, (n_in - 1) / 2.0)
        else:
            pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
        lo = np.clip(np.floor(pos).astype(np.int64), 0, n_in - 1)
        hi = np.clip(lo + 1, 0, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis_weights(h, out_h)
    x0, x1, fx = axis_weights(w, out_w)
    top = image[:, y0, :] * (1 - fy)[None, :, None] + image[:, y1, :] * fy[None, :, None]
    return top[:, :, x0] * (1 - fx)[None, None, :] + top[:, :, x1] * fx[None, None, :]


def crop_and_resize(image: np.ndarray, box, size: int) -> np.ndarray:
    """Extract the integer pixel extent of box (x1, y1, x2, y2) and resize it to size x size."""
    _, h, w = image.shape
    x1, y1, x2, y2 = box
    c0 = int(np.clip(math.floor(x1), 0, w - 1))
    r0 = int(np.clip(math.floor(y1), 0, h - 1))
    c1 = int(np.clip(math.ceil(x2), c0 + 1, w))
    r1 = int(np.clip(math.ceil(y2), r0 + 1, h))
    return resize_bilinear(image[:, r0:r1, c0:c1], (size, size))
