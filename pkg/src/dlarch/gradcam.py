"""Gradient-weighted class activation maps.

For target class c with raw logit y_c and final-cell feature maps A (K, u, v):

    alpha_k = (1 / (u * v)) * sum_ij dy_c / dA_kij
    L       = relu(sum_k alpha_k * A_k)

The gradient is seeded at the single logit y_c, never at the softmax output.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .convnet import rank_classes
from .data.ppm import encode_ppm
from .errors import ShapeError, ValidationError


@dataclass
class Heatmap:
    values: np.ndarray  # (u, v), non-negative
    class_index: int
    max_value: float

    @property
    def shape(self):
        return self.values.shape

    def normalized(self):
        """Values scaled to [0, 1] by the maximum; an all-zero map stays zero."""
        if self.max_value <= 0:
            return np.zeros_like(self.values, dtype=np.float64)
        return self.values.astype(np.float64) / self.max_value


def compute_alpha(grad_maps):
    """Channel weights: spatial mean of each gradient map, summed in row-major order."""
    g = np.asarray(grad_maps.data if isinstance(grad_maps, ad.Tensor) else grad_maps)
    if g.ndim != 3:
        raise ShapeError(f"gradient maps must be (K, u, v), got {g.shape}")
    K, u, v = g.shape
    if K == 0 or u == 0 or v == 0:
        raise ShapeError(f"empty gradient maps {g.shape}")
    acc = np.zeros(K, dtype=np.float64)
    for i in range(u):
        for j in range(v):
            acc += g[:, i, j]
    return acc / (u * v)


def gradcam_preactivation(feature_maps, alpha):
    """sum_k alpha_k * A_k before the ReLU."""
    A = np.asarray(feature_maps.data if isinstance(feature_maps, ad.Tensor) else feature_maps)
    alpha = np.asarray(alpha, dtype=np.float64)
    if A.ndim != 3:
        raise ShapeError(f"feature maps must be (K, u, v), got {A.shape}")
    if alpha.shape != (A.shape[0],):
        raise ShapeError(f"{alpha.shape[0] if alpha.ndim else 0} weights for {A.shape[0]} maps")
    out = np.zeros(A.shape[1:], dtype=np.float64)
    for k in range(A.shape[0]):
        out += alpha[k] * A[k]
    return out


def gradcam_map(feature_maps, alpha, class_index=-1):
    values = np.maximum(gradcam_preactivation(feature_maps, alpha), 0.0)
    return Heatmap(values, class_index, float(values.max()))


def explain(model, image, class_index):
    """Heatmap for one preprocessed (C, S, S) image and target class."""
    d = model.config.num_classes
    if not 0 <= class_index < d:
        raise ValidationError(f"class {class_index} out of range for {d} classes")
    x = ad.Tensor(np.asarray(image)[None], dtype=model.dtype)
    out = model.forward(x)
    A = out.feature_maps
    A.retain_grad = True
    y_c = ad.pick(out.logits, (0, class_index))
    # Only A's gradient is needed; parameter grads are cleared again afterwards.
    saved = [(p, p.grad) for p in model.parameters()]
    model.zero_grad()
    try:
        ad.backward(y_c)
    finally:
        for p, g in saved:
            p.grad = g
    alpha = compute_alpha(A.grad[0])
    return gradcam_map(A.data[0], alpha, class_index)


def explain_top(model, image, n=4):
    """[(class, probability, Heatmap)] for the ``n`` most probable classes."""
    d = model.config.num_classes
    if not 1 <= n <= d:
        raise ValidationError(f"top-n must be in [1, {d}], got {n}")
    with ad.no_grad():
        logits = model.forward(np.asarray(image, dtype=model.dtype)[None]).logits.data[0]
    order, probs = rank_classes(logits)
    return [(int(c), float(probs[c]), explain(model, image, int(c))) for c in order[:n]]


def upsample(values, size):
    """Bilinear resize of a (u, v) map to (size, size), corners aligned."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"expected a 2-D map, got {values.shape}")
    u, v = values.shape
    if size < u or size < v:
        raise ValidationError(f"target {size} smaller than source {u}x{v}; downsampling unsupported")

    def axis(n_src):
        if n_src == 1 or size == 1:
            pos = np.zeros(size)
        else:
            pos = np.arange(size) * (n_src - 1) / (size - 1)
        lo = np.minimum(np.floor(pos).astype(np.int64), n_src - 1)
        hi = np.minimum(lo + 1, n_src - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis(u)
    x0, x1, fx = axis(v)
    top = values[y0][:, x0] * (1 - fx) + values[y0][:, x1] * fx
    bottom = values[y1][:, x0] * (1 - fx) + values[y1][:, x1] * fx
    return top * (1 - fy[:, None]) + bottom * fy[:, None]


def _round_half_up(x):
    return np.floor(x + 0.5)


def render_overlay(image, heat):
    """Blend a red overlay onto ``image`` (H, W, 3 uint8) and return PPM bytes.

    ``heat`` is an (H, W) map scaled by its maximum before blending:
    out = (1 - m/2) * pixel + (m/2) * (255, 0, 0).
    """
    image = np.asarray(image)
    heat = np.asarray(heat, dtype=np.float64)
    if image.ndim != 3 or image.shape[:2] != heat.shape:
        raise ShapeError(f"overlay size {heat.shape} does not match image {image.shape}")
    peak = heat.max()
    m = heat / peak if peak > 0 else np.zeros_like(heat)
    m = m[:, :, None] * 0.5
    red = np.array([255.0, 0.0, 0.0])
    out = (1.0 - m) * image.astype(np.float64) + m * red
    return encode_ppm(np.clip(_round_half_up(out), 0, 255).astype(np.uint8))


def heatmap_pgm(heatmap):
    """Raw heatmap as PGM bytes, scaled to 0..255 by its maximum."""
    scaled = _round_half_up(heatmap.normalized() * 255.0)
    return encode_ppm(scaled.astype(np.uint8))


def display_image(image):
    """Preprocessed (3, S, S) array back to displayable (S, S, 3) uint8."""
    x = (np.asarray(image, dtype=np.float64).transpose(1, 2, 0) + 0.5) * 255.0
    return np.clip(_round_half_up(x), 0, 255).astype(np.uint8)


QUADRANT_SLICES = {
    "TL": (0, 0),
    "TR": (0, 1),
    "BL": (1, 0),
    "BR": (1, 1),
}


def quadrant_mass(values, quadrant):
    """Fraction of total heatmap mass inside one quadrant; NaN for an all-zero map."""
    values = np.asarray(values, dtype=np.float64)
    total = values.sum()
    if total <= 0:
        return float("nan")
    u, v = values.shape
    qi, qj = QUADRANT_SLICES[quadrant]
    rows = slice(0, u // 2) if qi == 0 else slice(u - u // 2, u)
    cols = slice(0, v // 2) if qj == 0 else slice(v - v // 2, v)
    return float(values[rows, cols].sum() / total)
