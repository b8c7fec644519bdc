import numpy as np
import pytest

from dlarch.data.transforms import augment, center_square, hflip, nearest_indices, preprocess, resize_nearest
from dlarch.errors import ValidationError


def test_same_size_only_scales(rng):
    img = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    x = preprocess(img, 8)
    assert x.dtype == np.float32 and x.shape == (3, 8, 8)
    np.testing.assert_array_equal(x, img.transpose(2, 0, 1).astype(np.float32) / np.float32(255) - np.float32(0.5))


def test_constant_128():
    x = preprocess(np.full((5, 5, 3), 128, dtype=np.uint8), 5)
    np.testing.assert_allclose(x, 128 / 255 - 0.5, atol=1e-7)
    assert x[0, 0, 0] == pytest.approx(0.00196, abs=1e-5)


def test_checkerboard_downsample_hand_indexed():
    # 8x8 checkerboard of 1-pixel cells, resized to 4x4: centers at source 1, 3, 5, 7.
    board = ((np.add.outer(np.arange(8), np.arange(8)) % 2) * 255).astype(np.uint8)
    img = np.repeat(board[:, :, None], 3, axis=2)
    out = resize_nearest(img, 4, 4)[:, :, 0]
    expected = np.array([[board[r, c] for c in (1, 3, 5, 7)] for r in (1, 3, 5, 7)])
    np.testing.assert_array_equal(out, expected)


def test_upsample_indices():
    np.testing.assert_array_equal(nearest_indices(2, 4), [0, 0, 1, 1])
    np.testing.assert_array_equal(nearest_indices(3, 3), [0, 1, 2])


def test_center_square():
    img = np.arange(2 * 6).reshape(2, 6)
    np.testing.assert_array_equal(center_square(img), img[:, 2:4])


def test_degenerate_image_rejected():
    with pytest.raises(ValidationError):
        preprocess(np.zeros((0, 4, 3), dtype=np.uint8), 4)


class ScriptedRng:
    """Returns fixed draws: random() for flip, uniform() for area, integers() for offsets."""

    def __init__(self, flip_u, area, top=0, left=0):
        self.flip_u, self.area, self.offsets = flip_u, area, [top, left]

    def random(self):
        return self.flip_u

    def uniform(self, lo, hi):
        return self.area

    def integers(self, lo, hi):
        return self.offsets.pop(0)


def test_null_augmentation_is_identity(rng):
    img = rng.integers(0, 256, size=(10, 10, 3), dtype=np.uint8)
    np.testing.assert_array_equal(augment(img, ScriptedRng(0.9, 1.0)), img)


def test_flip_only():
    img = np.arange(12, dtype=np.uint8).reshape(2, 2, 3)
    np.testing.assert_array_equal(augment(img, ScriptedRng(0.1, 1.0)), img[:, ::-1])


def test_flip_is_involution(rng):
    img = rng.integers(0, 256, size=(4, 7, 3), dtype=np.uint8)
    np.testing.assert_array_equal(hflip(hflip(img)), img)


def test_augment_deterministic_and_shape_preserving(rng):
    img = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
    a = augment(img, np.random.default_rng(5))
    b = augment(img, np.random.default_rng(5))
    assert a.shape == img.shape
    assert a.tobytes() == b.tobytes()


def test_augment_regression_fixture():
    img = np.arange(16 * 16 * 3, dtype=np.int64).reshape(16, 16, 3).astype(np.uint8)
    out = augment(img, np.random.default_rng(2024))
    r = np.random.default_rng(2024)
    flip = r.random() < 0.5
    side = np.sqrt(r.uniform(0.9, 1.0))
    ch = cw = int(round(side * 16))
    top, left = int(r.integers(0, 16 - ch + 1)), int(r.integers(0, 16 - cw + 1))
    src = img[:, ::-1] if flip else img
    crop = src[top:top + ch, left:left + cw]
    idx = np.minimum(((np.arange(16) + 0.5) * ch / 16).astype(int), ch - 1)
    np.testing.assert_array_equal(out, crop[idx][:, idx])
