"""Hot numeric kernels, dispatched to numba or numpy per ``DLARCH_BACKEND``.

All kernels take batched (B, C, H, W) arrays; convolution inputs arrive
already zero-padded.
"""

from .._accel import BACKEND

if BACKEND == "numba":
    from ._numba import (
        conv2d_forward,
        conv2d_grad_input,
        conv2d_grad_weight,
        matmul,
        spatial_mean,
    )
else:
    from ._numpy import (
        conv2d_forward,
        conv2d_grad_input,
        conv2d_grad_weight,
        matmul,
        spatial_mean,
    )

__all__ = [
    "BACKEND",
    "conv2d_forward",
    "conv2d_grad_input",
    "conv2d_grad_weight",
    "matmul",
    "spatial_mean",
]
