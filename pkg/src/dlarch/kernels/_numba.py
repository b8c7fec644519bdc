"""numba kernels. Same signatures and accumulation order as ``_numpy``."""

import numpy as np
from numba import njit

_jit = njit(cache=True, nogil=True)


@_jit
def conv2d_forward(xp, w, stride, out_h, out_w):
    B, C = xp.shape[0], xp.shape[1]
    Co, _, kh, kw = w.shape
    out = np.zeros((B, Co, out_h, out_w), dtype=xp.dtype)
    for b in range(B):
        for co in range(Co):
            for ci in range(C):
                for ky in range(kh):
                    for kx in range(kw):
                        wv = w[co, ci, ky, kx]
                        for y in range(out_h):
                            src = xp[b, ci, y * stride + ky]
                            dst = out[b, co, y]
                            for x in range(out_w):
                                dst[x] += wv * src[x * stride + kx]
    return out


@_jit
def conv2d_grad_input(gout, w, stride, pad_h, pad_w):
    B, Co, out_h, out_w = gout.shape
    C, kh, kw = w.shape[1], w.shape[2], w.shape[3]
    gxp = np.zeros((B, C, pad_h, pad_w), dtype=gout.dtype)
    for b in range(B):
        for co in range(Co):
            for ci in range(C):
                for ky in range(kh):
                    for kx in range(kw):
                        wv = w[co, ci, ky, kx]
                        for y in range(out_h):
                            src = gout[b, co, y]
                            dst = gxp[b, ci, y * stride + ky]
                            for x in range(out_w):
                                dst[x * stride + kx] += wv * src[x]
    return gxp


# Reassociation is allowed here: only determinism is required, not a fixed order.
@_jit
def conv2d_grad_weight(gout, xp, stride, kh, kw):
    B, Co, out_h, out_w = gout.shape
    C = xp.shape[1]
    n = out_h * out_w
    gw = np.zeros((B, Co, C, kh, kw), dtype=gout.dtype)
    patch = np.empty((C, n), dtype=xp.dtype)
    for b in range(B):
        g = np.ascontiguousarray(gout[b]).reshape(Co, n)
        for ky in range(kh):
            for kx in range(kw):
                for ci in range(C):
                    for y in range(out_h):
                        src = xp[b, ci, y * stride + ky]
                        for x in range(out_w):
                            patch[ci, y * out_w + x] = src[x * stride + kx]
                gw[b, :, :, ky, kx] = np.dot(g, patch.T)
    return gw


@_jit
def matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=a.dtype)
    for i in range(m):
        for j in range(k):
            av = a[i, j]
            for c in range(n):
                out[i, c] += av * b[j, c]
    return out


@_jit
def spatial_mean(x):
    B, C, H, W = x.shape
    acc = np.zeros((B, C), dtype=x.dtype)
    for i in range(H):
        for j in range(W):
            for b in range(B):
                for c in range(C):
                    acc[b, c] += x[b, c, i, j]
    z = np.zeros(1, dtype=x.dtype)
    z[0] = H * W
    return acc / z[0]
