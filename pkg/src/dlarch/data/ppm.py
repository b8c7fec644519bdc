"""Binary PPM (P6) and PGM (P5) codecs, maxval 255 only."""

import numpy as np

from ..errors import ValidationError


class PPMError(ValidationError):
    pass


class BadMagicError(PPMError):
    pass


class MaxvalError(PPMError):
    pass


class TruncatedImageError(PPMError):
    pass


def _read_header(buf):
    """Parse magic, width, height, maxval; return them plus the payload offset."""
    fields = []
    pos = 0
    n = len(buf)
    while len(fields) < 4:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise TruncatedImageError("header ended early")
        fields.append(bytes(buf[start:pos]))
        if len(fields) == 1 and fields[0] not in (b"P5", b"P6"):
            raise BadMagicError(f"bad magic {fields[0][:8]!r}, expected P5 or P6")
    if pos >= n or not buf[pos:pos + 1].isspace():
        raise TruncatedImageError("missing whitespace after maxval")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise PPMError(f"non-numeric header fields {fields[1:]}") from None
    if width < 1 or height < 1:
        raise PPMError(f"degenerate size {width}x{height}")
    if maxval != 255:
        raise MaxvalError(f"maxval {maxval} unsupported, only 255")
    return fields[0], width, height, pos + 1


def decode_ppm(data):
    """Decode P6 to (H, W, 3) uint8 or P5 to (H, W) uint8."""
    data = bytes(data)
    magic, width, height, offset = _read_header(data)
    channels = 3 if magic == b"P6" else 1
    size = width * height * channels
    payload = data[offset:offset + size]
    if len(payload) < size:
        raise TruncatedImageError(f"payload has {len(payload)} of {size} bytes")
    arr = np.frombuffer(payload, dtype=np.uint8)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return arr.reshape(shape).copy()


def encode_ppm(pixels):
    """Encode (H, W, 3) uint8 as P6 or (H, W) uint8 as P5 with a canonical header."""
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        raise PPMError(f"pixels must be uint8, got {pixels.dtype}")
    if pixels.ndim == 3 and pixels.shape[2] == 3:
        magic = b"P6"
    elif pixels.ndim == 2:
        magic = b"P5"
    else:
        raise PPMError(f"cannot encode array of shape {pixels.shape}")
    h, w = pixels.shape[:2]
    if h < 1 or w < 1:
        raise PPMError(f"degenerate size {w}x{h}")
    return b"%s\n%d %d\n255\n" % (magic, w, h) + np.ascontiguousarray(pixels).tobytes()


encode_pgm = encode_ppm


def read_image(path):
    """Read a PPM/PGM file as (H, W, 3) uint8; PNG goes through Pillow if installed."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            from PIL import Image
        except ImportError:
            raise PPMError(f"{path}: PNG input needs Pillow") from None
        import io

        return np.asarray(Image.open(io.BytesIO(data)).convert("RGB"), dtype=np.uint8)
    img = decode_ppm(data)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    return img


def write_ppm(path, pixels):
    with open(path, "wb") as f:
        f.write(encode_ppm(pixels))
