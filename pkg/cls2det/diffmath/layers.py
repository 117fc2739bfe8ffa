"""
layers.py - Dense and convolutional primitives with hand-written backward rules
"""

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from cls2det.errors import ShapeError
from .tensor import DiffTensor, record


def matmul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul needs [N,I]x[I,O], got {a.shape} x {b.shape}")
    return record("matmul", a.data @ b.data, (a, b),
                  lambda g: (g @ b.data.T, a.data.T @ g))


def linear_map(x: DiffTensor, w: DiffTensor, b: Optional[DiffTensor] = None) -> DiffTensor:
    """y = x.w + b for x [N,I], w [I,O], b [O]."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"linear_map needs x [N,I] and w [I,O], got {x.shape} and {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"bias shape {b.shape} does not match output width {w.shape[1]}")
    out = x.data @ w.data
    if b is not None:
        out = out + b.data
        inputs = (x, w, b)
    else:
        inputs = (x, w)

    def backward(g):
        grads = (g @ w.data.T, x.data.T @ g)
        if b is not None:
            grads = grads + (g.sum(axis=0),)
        return grads

    return record("linear_map", out, inputs, backward)


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d(x: DiffTensor, k: DiffTensor, stride: int = 1, pad: int = 0,
           bias: Optional[DiffTensor] = None) -> DiffTensor:
    """
    Cross-correlation of x [N,C,H,W] with k [F,C,kh,kw] and zero padding.
    Output [N,F,H',W'] with H' = floor((H + 2 pad - kh) / stride) + 1.
    """
    if x.ndim != 4 or k.ndim != 4:
        raise ShapeError(f"conv2d needs 4-d input and kernel, got {x.shape} and {k.shape}")
    n, c, h, w = x.shape
    f, kc, kh, kw = k.shape
    if kc != c:
        raise ShapeError(f"kernel expects {kc} channels, input has {c}")
    if stride < 1 or pad < 0:
        raise ShapeError(f"invalid stride {stride} / pad {pad}")
    if kh > h + 2 * pad or kw > w + 2 * pad:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{w + 2 * pad}")
    if bias is not None and bias.shape != (f,):
        raise ShapeError(f"bias shape {bias.shape} does not match {f} filters")

    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(w, kw, stride, pad)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # cols: [N*ho*wo, C*kh*kw]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    kmat = k.data.reshape(f, c * kh * kw)
    out = (cols @ kmat.T).reshape(n, ho, wo, f).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
        inputs = (x, k, bias)
    else:
        inputs = (x, k)

    def backward(g):
        gflat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
        dk = (gflat.T @ cols).reshape(k.shape)
        dcols = (gflat @ kmat).reshape(n, ho, wo, c, kh, kw)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                    dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        dx = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
        grads = (dx, dk)
        if bias is not None:
            grads = grads + (g.sum(axis=(0, 2, 3)),)
        return grads

    return record("conv2d", out, inputs, backward)
