"""Binary checkpoint format.

    magic      4 bytes  b"DLAC"
    version    u32 LE
    config     u32 LE length + UTF-8 ``key=value`` lines
    tensors    repeated: u32 name length, UTF-8 name, u32 rank, u32 dims..., f32 LE data

Tensors appear in model parameter order. Class names, when known, are stored
in the config block as ``classes=a,b,c``.
"""

import struct

import numpy as np

from . import autodiff as ad
from .convnet import Model, ModelConfig, parameter_shapes
from .errors import DlarchError, ValidationError

MAGIC = b"DLAC"
VERSION = 1
_U32 = struct.Struct("<I")


class CheckpointError(DlarchError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


class CheckpointConfigError(CheckpointError):
    pass


def config_block(model):
    items = model.config.to_dict()
    if model.class_names:
        for name in model.class_names:
            if "," in name or "\n" in name:
                raise ValidationError(f"class name {name!r} cannot be stored (comma or newline)")
        items["classes"] = ",".join(model.class_names)
    return "".join(f"{k}={v}\n" for k, v in items.items()).encode("utf-8")


def checkpoint_bytes(model):
    cfg = config_block(model)
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(cfg)), cfg]
    for name, t in model.params.items():
        raw = name.encode("utf-8")
        parts += [_U32.pack(len(raw)), raw, _U32.pack(t.data.ndim)]
        parts += [_U32.pack(d) for d in t.data.shape]
        parts.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(model, path):
    data = checkpoint_bytes(model)
    with open(path, "wb") as f:
        f.write(data)
    return len(data)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(
                f"file truncated reading {what}: need {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]


def parse_config(text):
    items = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointConfigError(f"malformed config line {line!r}")
        items[key.strip()] = value.strip()
    try:
        config = ModelConfig(
            num_classes=int(items["num_classes"]),
            image_size=int(items["image_size"]),
            in_channels=int(items["in_channels"]),
            stem_channels=int(items["stem_channels"]),
            cells=items["cells"],
            seed=int(items["seed"]),
        )
    except (KeyError, ValueError) as exc:
        raise CheckpointConfigError(f"bad config block: {exc}") from None
    classes = items["classes"].split(",") if items.get("classes") else None
    return config, classes


def checkpoint_from_bytes(data, dtype=np.float32):
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = r.u32("version")
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, this build reads {VERSION}")
    n = r.u32("config length")
    try:
        text = r.take(n, "config").decode("utf-8")
    except UnicodeDecodeError:
        raise CheckpointConfigError("config block is not UTF-8") from None
    config, classes = parse_config(text)
    try:
        config.validate()
    except ValidationError as exc:
        raise CheckpointConfigError(str(exc)) from None

    params = {}
    for name, shape in parameter_shapes(config):
        got_name = r.take(r.u32("name length"), "name").decode("utf-8", errors="replace")
        if got_name != name:
            raise CheckpointShapeError(f"expected tensor {name!r}, found {got_name!r}")
        rank = r.u32(f"{name} rank")
        dims = tuple(r.u32(f"{name} dims") for _ in range(rank))
        if dims != shape:
            raise CheckpointShapeError(f"{name}: stored shape {dims}, config implies {shape}")
        count = int(np.prod(dims))
        raw = r.take(4 * count, f"{name} data")
        arr = np.frombuffer(raw, dtype="<f4").reshape(dims)
        params[name] = ad.Tensor(arr, requires_grad=True, dtype=dtype, name=name)
    if r.pos != len(data):
        raise CheckpointShapeError(f"{len(data) - r.pos} trailing bytes after last tensor")
    return Model(config, params, classes)


def load_checkpoint(path, dtype=np.float32):
    with open(path, "rb") as f:
        return checkpoint_from_bytes(f.read(), dtype)


def expected_size(config, class_names=None):
    """Exact byte length of a checkpoint for ``config``."""
    model = Model(config, {}, class_names)
    header = 4 + 4 + 4 + len(config_block(model))
    body = 0
    for name, shape in parameter_shapes(config):
        body += 4 + len(name.encode("utf-8")) + 4 + 4 * len(shape) + 4 * int(np.prod(shape))
    return header + body
