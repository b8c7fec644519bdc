"""Flat ``key=value`` run configuration for the ``train`` command."""

from dataclasses import dataclass, fields

from .convnet import TrainConfig, parse_cells
from .errors import ValidationError


@dataclass(frozen=True)
class RunConfig:
    image_size: int = 64
    stem_channels: int = 8
    cells: str = "RRN"
    epochs: int = 30
    lr_schedule: str = "0:0.1,20:0.01"
    batch_size: int = 16
    momentum: float = 0.9
    seed: int = 0
    split_ratio: float = 0.8
    grad_clip: float = 1.0
    augment: bool = True

    def schedule(self):
        try:
            pairs = []
            for item in self.lr_schedule.split(","):
                start, lr = item.split(":")
                pairs.append((int(start), float(lr)))
        except ValueError:
            raise ValidationError(
                f"lr_schedule must look like 0:0.1,20:0.01, got {self.lr_schedule!r}"
            ) from None
        return tuple(pairs)

    def train_config(self):
        tc = TrainConfig(
            epochs=self.epochs,
            lr_schedule=self.schedule(),
            batch_size=self.batch_size,
            momentum=self.momentum,
            seed=self.seed,
            augment=self.augment,
            grad_clip=self.grad_clip,
        )
        tc.validate()
        return tc

    def validate(self):
        parse_cells(self.cells)
        if not 0 < self.split_ratio < 1:
            raise ValidationError(f"split_ratio must be in (0, 1), got {self.split_ratio}")
        self.train_config()


def _coerce(name, typ, raw):
    if typ is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"{name}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError:
        raise ValidationError(f"{name}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_run_config(text):
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValidationError(f"line {lineno}: expected key=value, got {line!r}")
        if key not in types:
            raise ValidationError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValidationError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, types[key], raw.strip())
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def load_run_config(path):
    with open(path, encoding="utf-8") as f:
        return parse_run_config(f.read())


def format_run_config(cfg):
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out.append(f"{f.name}={str(v).lower() if isinstance(v, bool) else v}\n")
    return "".join(out)
