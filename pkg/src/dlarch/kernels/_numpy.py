"""Pure-numpy kernels.

Forward kernels accumulate in the same order as the numba versions (and as a
naive scalar loop), so forward outputs agree bit-for-bit across backends.
"""

import numpy as np


def conv2d_forward(xp, w, stride, out_h, out_w):
    B, C = xp.shape[:2]
    Co, _, kh, kw = w.shape
    out = np.zeros((B, Co, out_h, out_w), dtype=xp.dtype)
    ys = stride * (out_h - 1) + 1
    xs = stride * (out_w - 1) + 1
    for ci in range(C):
        for ky in range(kh):
            for kx in range(kw):
                patch = xp[:, ci, ky:ky + ys:stride, kx:kx + xs:stride]
                out += w[None, :, ci, ky, kx, None, None] * patch[:, None]
    return out


def conv2d_grad_input(gout, w, stride, pad_h, pad_w):
    B, Co, out_h, out_w = gout.shape
    _, C, kh, kw = w.shape
    gxp = np.zeros((B, C, pad_h, pad_w), dtype=gout.dtype)
    ys = stride * (out_h - 1) + 1
    xs = stride * (out_w - 1) + 1
    for co in range(Co):
        g = gout[:, co][:, None]
        for ky in range(kh):
            for kx in range(kw):
                gxp[:, :, ky:ky + ys:stride, kx:kx + xs:stride] += (
                    w[None, co, :, ky, kx, None, None] * g
                )
    return gxp


def conv2d_grad_weight(gout, xp, stride, kh, kw):
    """Per-sample kernel gradients, shape (B, Co, C, kh, kw)."""
    B, Co, out_h, out_w = gout.shape
    C = xp.shape[1]
    gw = np.zeros((B, Co, C, kh, kw), dtype=gout.dtype)
    ys = stride * (out_h - 1) + 1
    xs = stride * (out_w - 1) + 1
    g = gout.reshape(B, Co, out_h * out_w)
    for ky in range(kh):
        for kx in range(kw):
            patch = xp[:, :, ky:ky + ys:stride, kx:kx + xs:stride]
            gw[:, :, :, ky, kx] = g @ patch.reshape(B, C, out_h * out_w).transpose(0, 2, 1)
    return gw


def matmul(a, b):
    m, k = a.shape
    out = np.zeros((m, b.shape[1]), dtype=a.dtype)
    for j in range(k):
        out += a[:, j, None] * b[None, j, :]
    return out


def spatial_mean(x):
    B, C, H, W = x.shape
    acc = np.zeros((B, C), dtype=x.dtype)
    for i in range(H):
        for j in range(W):
            acc += x[:, :, i, j]
    return acc / x.dtype.type(H * W)
