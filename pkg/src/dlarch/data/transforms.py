import numpy as np

from ..errors import ValidationError


def nearest_indices(n_src, n_dst):
    """Source index for each destination pixel, sampling at pixel centers."""
    idx = ((np.arange(n_dst) + 0.5) * n_src / n_dst).astype(np.int64)
    return np.minimum(idx, n_src - 1)


def resize_nearest(image, height, width):
    h, w = image.shape[:2]
    return image[nearest_indices(h, height)][:, nearest_indices(w, width)]


def center_square(image):
    h, w = image.shape[:2]
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    return image[top:top + s, left:left + s]


def preprocess(image, image_size):
    """Center-crop to a square, resize to ``image_size`` and map bytes to [-0.5, 0.5].

    Returns a float32 array of shape (3, image_size, image_size).
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] < 1 or image.shape[1] < 1:
        raise ValidationError(f"cannot preprocess image of shape {image.shape}")
    sq = center_square(image)
    if sq.shape[0] != image_size:
        sq = resize_nearest(sq, image_size, image_size)
    x = sq.astype(np.float32) / np.float32(255) - np.float32(0.5)
    return np.ascontiguousarray(x.transpose(2, 0, 1))


def hflip(image):
    return image[:, ::-1]


def augment(image, rng, flip_prob=0.5, min_area=0.9):
    """Random horizontal flip, then a random crop of ``min_area``..1 of the area resized back.

    Draw order from ``rng``: flip, area fraction, top offset, left offset.
    """
    h, w = image.shape[:2]
    flip = rng.random() < flip_prob
    area = rng.uniform(min_area, 1.0)
    side = np.sqrt(area)
    ch = min(h, max(1, int(round(side * h))))
    cw = min(w, max(1, int(round(side * w))))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    out = hflip(image) if flip else image
    out = out[top:top + ch, left:left + cw]
    if (ch, cw) != (h, w):
        out = resize_nearest(out, h, w)
    return np.ascontiguousarray(out)
