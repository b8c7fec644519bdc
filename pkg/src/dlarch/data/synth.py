"""Synthetic glyph corpus: each class is a textured glyph on a noisy background.

In ``fixed-quadrant`` mode the glyph sits entirely inside one quadrant, chosen
per image and written to ``ground_truth.csv`` so heatmap localization can be
scored. With ``families`` set, classes come in groups sharing a glyph pattern
and differing only in colour tint; ``families.csv`` records the grouping.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from .manifest import ManifestRow, write_manifest
from .ppm import encode_ppm

QUADRANTS = ("TL", "TR", "BL", "BR")
PLACEMENTS = ("fixed-quadrant", "random")


def _stripes(u, v, f, ph):
    return np.floor(v * f + ph) % 2 == 0


def _vstripes(u, v, f, ph):
    return np.floor(u * f + ph) % 2 == 0


def _diag(u, v, f, ph):
    return np.floor((u + v) * f * 0.7 + ph) % 2 == 0


def _antidiag(u, v, f, ph):
    return np.floor((u - v) * f * 0.7 + ph) % 2 == 0


def _checker(u, v, f, ph):
    return (np.floor(u * f * 0.5) + np.floor(v * f * 0.5)) % 2 == 0


def _rings(u, v, f, ph):
    r = np.hypot(u - 0.5, v - 0.5)
    return (np.floor(r * f * 1.6 + ph) % 2 == 0) & (r < 0.5)


def _cross(u, v, f, ph):
    return (np.abs(u - 0.5) < 0.14) | (np.abs(v - 0.5) < 0.14)


def _xcross(u, v, f, ph):
    return (np.abs(u - v) < 0.14) | (np.abs(u + v - 1) < 0.14)


def _dots(u, v, f, ph):
    g = f * 0.5
    return ((u * g) % 1 - 0.5) ** 2 + ((v * g) % 1 - 0.5) ** 2 < 0.09


def _grid(u, v, f, ph):
    g = f * 0.5
    return ((u * g) % 1 < 0.3) | ((v * g) % 1 < 0.3)


def _disk(u, v, f, ph):
    return np.hypot(u - 0.5, v - 0.5) < 0.45


def _frame(u, v, f, ph):
    m = np.minimum(np.minimum(u, 1 - u), np.minimum(v, 1 - v))
    return m < 0.16


PATTERNS = {
    "hstripes": _stripes,
    "vstripes": _vstripes,
    "diag": _diag,
    "antidiag": _antidiag,
    "checker": _checker,
    "rings": _rings,
    "cross": _cross,
    "xcross": _xcross,
    "dots": _dots,
    "grid": _grid,
    "disk": _disk,
    "frame": _frame,
}
PATTERN_NAMES = tuple(PATTERNS)

COLORS = (
    (230, 30, 30),
    (30, 200, 40),
    (40, 60, 230),
    (240, 220, 20),
    (220, 30, 220),
    (20, 210, 220),
    (250, 140, 20),
    (120, 40, 200),
    (250, 250, 250),
    (10, 10, 10),
    (140, 90, 30),
    (90, 200, 140),
)

TINTS = ((0, 0, 0), (0, 70, 0), (0, 0, 70), (70, 0, 0))


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 4
    samples_per_class: int = 10
    image_size: int = 64
    placement: str = "fixed-quadrant"
    seed: int = 0
    families: int = 0
    train_fraction: float = 0.8

    def validate(self):
        if self.num_classes < 2:
            raise ValidationError(f"need at least 2 classes, got {self.num_classes}")
        if self.families:
            if self.num_classes % self.families:
                raise ValidationError(
                    f"{self.num_classes} classes do not split into {self.families} families"
                )
            per_family = self.num_classes // self.families
            if self.families > len(PATTERN_NAMES) or per_family > len(TINTS):
                raise ValidationError(
                    f"glyph signatures exhausted: at most {len(PATTERN_NAMES)} families "
                    f"of {len(TINTS)} classes"
                )
        elif self.num_classes > len(PATTERN_NAMES):
            raise ValidationError(
                f"glyph signatures exhausted: {self.num_classes} classes requested, "
                f"only {len(PATTERN_NAMES)} available"
            )
        if self.samples_per_class < 1:
            raise ValidationError("samples_per_class must be >= 1")
        if self.image_size < 8:
            raise ValidationError(f"image_size {self.image_size} too small, need >= 8")
        if self.placement not in PLACEMENTS:
            raise ValidationError(f"placement must be one of {PLACEMENTS}")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValidationError("train_fraction must be in (0, 1]")


def class_signature(spec, c):
    """(class name, pattern name, RGB colour, family index) for class ``c``."""
    if spec.families:
        per_family = spec.num_classes // spec.families
        family, member = divmod(c, per_family)
        pattern = PATTERN_NAMES[family]
        base = np.array(COLORS[family], dtype=np.int64)
        color = tuple(int(v) for v in np.clip(base + np.array(TINTS[member]), 0, 255))
        return f"c{c:02d}_{pattern}{member}", pattern, color, family
    pattern = PATTERN_NAMES[c]
    return f"c{c:02d}_{pattern}", pattern, COLORS[c], c


def render_sample(spec, c, index):
    """Render image ``index`` of class ``c``; returns (uint8 H x W x 3, quadrant or None)."""
    _, pattern, color, _ = class_signature(spec, c)
    rng = np.random.default_rng([spec.seed, c, index])
    S = spec.image_size
    half = S // 2

    gray = rng.integers(90, 161)
    img = gray + rng.normal(0.0, 25.0, size=(S, S, 3))

    side = int(rng.integers(int(0.6 * half), int(0.9 * half) + 1))
    if spec.placement == "fixed-quadrant":
        q = int(rng.integers(4))
        qy, qx = (q // 2) * half, (q % 2) * half
        top = qy + int(rng.integers(0, half - side + 1))
        left = qx + int(rng.integers(0, half - side + 1))
        quadrant = QUADRANTS[q]
    else:
        top = int(rng.integers(0, S - side + 1))
        left = int(rng.integers(0, S - side + 1))
        quadrant = None

    freq = rng.uniform(5.0, 7.0)
    phase = rng.uniform(0.0, 2.0)
    coords = (np.arange(side) + 0.5) / side
    v, u = np.meshgrid(coords, coords, indexing="ij")
    mask = PATTERNS[pattern](u, v, freq, phase)
    jitter = rng.normal(0.0, 12.0, size=3)
    box = img[top:top + side, left:left + side]
    box[mask] = np.array(color) + jitter + rng.normal(0.0, 8.0, size=(int(mask.sum()), 3))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), quadrant


@dataclass
class SynthCorpus:
    manifest_path: Path
    rows: list
    quadrants: dict
    families: dict


def generate_synthetic(spec, out_dir):
    """Write images, ``manifest.csv`` and the sidecar files under ``out_dir``."""
    spec.validate()
    out_dir = Path(out_dir)
    rows, quadrants, families = [], {}, {}
    n_train = max(1, int(round(spec.samples_per_class * spec.train_fraction)))
    for c in range(spec.num_classes):
        name, _, _, family = class_signature(spec, c)
        families[name] = family
        class_dir = out_dir / "images" / name
        class_dir.mkdir(parents=True, exist_ok=True)
        for i in range(spec.samples_per_class):
            img, quadrant = render_sample(spec, c, i)
            rel = f"images/{name}/{name}_{i:04d}.ppm"
            (out_dir / rel).write_bytes(encode_ppm(img))
            rows.append(
                ManifestRow(
                    path=rel,
                    label=name,
                    split="train" if i < n_train else "test",
                    view=("indoor", "outdoor")[i % 2],
                    source=("self", "web")[(i // 2) % 2],
                )
            )
            if quadrant is not None:
                quadrants[rel] = quadrant
    manifest_path = out_dir / "manifest.csv"
    write_manifest(manifest_path, rows)
    if spec.placement == "fixed-quadrant":
        with open(out_dir / "ground_truth.csv", "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("path", "glyph_quadrant"))
            w.writerows(quadrants.items())
    if spec.families:
        with open(out_dir / "families.csv", "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("class", "family"))
            w.writerows(families.items())
    return SynthCorpus(manifest_path, rows, quadrants, families)


def read_ground_truth(path):
    with open(path, newline="", encoding="utf-8") as f:
        return {r["path"]: r["glyph_quadrant"] for r in csv.DictReader(f)}
