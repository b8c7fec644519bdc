import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dlarch.data.ppm import (
    BadMagicError,
    MaxvalError,
    PPMError,
    TruncatedImageError,
    decode_ppm,
    encode_pgm,
    encode_ppm,
    read_image,
    write_ppm,
)


def test_single_red_pixel():
    data = encode_ppm(np.array([[[255, 0, 0]]], dtype=np.uint8))
    assert data == b"P6\n1 1\n255\n\xff\x00\x00"


def test_pgm_header():
    assert encode_pgm(np.array([[7, 9]], dtype=np.uint8)) == b"P5\n2 1\n255\n\x07\x09"


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9), st.just(3))))
def test_round_trip_rgb(pixels):
    data = encode_ppm(pixels)
    np.testing.assert_array_equal(decode_ppm(data), pixels)
    assert encode_ppm(decode_ppm(data)) == data


@settings(max_examples=20, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9))))
def test_round_trip_gray(pixels):
    np.testing.assert_array_equal(decode_ppm(encode_pgm(pixels)), pixels)


def test_header_comments_and_whitespace():
    data = b"P6 # comment\n2\t1\n# another\n255\n" + bytes(range(6))
    np.testing.assert_array_equal(decode_ppm(data).reshape(-1), np.arange(6))


def test_distinct_errors():
    with pytest.raises(BadMagicError):
        decode_ppm(b"P3\n1 1\n255\n000")
    with pytest.raises(MaxvalError):
        decode_ppm(b"P6\n1 1\n65535\n" + bytes(6))
    with pytest.raises(TruncatedImageError):
        decode_ppm(b"P6\n2 2\n255\n" + bytes(5))
    with pytest.raises(TruncatedImageError):
        decode_ppm(b"P6\n2 2")
    assert not issubclass(BadMagicError, MaxvalError)


def test_encode_rejects_non_uint8():
    with pytest.raises(PPMError):
        encode_ppm(np.zeros((2, 2, 3), dtype=np.float32))


def test_read_image_expands_gray(tmp_path):
    p = tmp_path / "g.pgm"
    p.write_bytes(encode_pgm(np.array([[10, 20]], dtype=np.uint8)))
    img = read_image(p)
    assert img.shape == (1, 2, 3)
    np.testing.assert_array_equal(img[0, 1], [20, 20, 20])


def test_write_then_read(tmp_path, rng):
    px = rng.integers(0, 256, size=(5, 4, 3), dtype=np.uint8)
    write_ppm(tmp_path / "x.ppm", px)
    np.testing.assert_array_equal(read_image(tmp_path / "x.ppm"), px)


def test_png_adapter(tmp_path, rng):
    Image = pytest.importorskip("PIL.Image")
    px = rng.integers(0, 256, size=(3, 5, 3), dtype=np.uint8)
    Image.fromarray(px).save(tmp_path / "x.png")
    np.testing.assert_array_equal(read_image(tmp_path / "x.png"), px)
