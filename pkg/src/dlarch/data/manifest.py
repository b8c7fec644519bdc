"""Manifest CSV (``path,label,split,view,source``) loading and the Dataset view over it."""

import csv
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from .ppm import read_image

logger = logging.getLogger(__name__)

HEADER = ("path", "label", "split", "view", "source")
SPLITS = ("train", "test")
VIEWS = ("indoor", "outdoor", "unknown")
SOURCES = ("self", "web", "synthetic")


class ManifestError(ValidationError):
    pass


class ManifestHeaderError(ManifestError):
    pass


class MissingImageError(ManifestError):
    pass


class UnknownTokenError(ManifestError):
    pass


class DuplicatePathError(ManifestError):
    pass


class EmptyClassError(ManifestError):
    pass


@dataclass(frozen=True)
class ManifestRow:
    path: str
    label: str
    split: str
    view: str = "unknown"
    source: str = "synthetic"


class Dataset:
    """Validated manifest rows plus lazy, cached image decoding.

    Class indices follow the lexicographic order of class names, so they do
    not depend on row order.
    """

    def __init__(self, rows, root=".", check_files=True):
        self.root = Path(root)
        self.rows = list(rows)
        seen = set()
        for row in self.rows:
            for field, allowed in (("split", SPLITS), ("view", VIEWS), ("source", SOURCES)):
                value = getattr(row, field)
                if value not in allowed:
                    raise UnknownTokenError(
                        f"{row.path}: unknown {field} {value!r}, expected one of {allowed}"
                    )
            if not row.label:
                raise ManifestError(f"{row.path}: empty label")
            if row.path in seen:
                raise DuplicatePathError(f"duplicate path {row.path}")
            seen.add(row.path)
            if check_files and not self.resolve(row).is_file():
                raise MissingImageError(f"image not found: {row.path}")
        self.classes = sorted({row.label for row in self.rows})
        self.class_index = {name: i for i, name in enumerate(self.classes)}
        self._cache = {}

    @property
    def num_classes(self):
        return len(self.classes)

    def __len__(self):
        return len(self.rows)

    def resolve(self, row):
        p = Path(row.path)
        return p if p.is_absolute() else self.root / p

    def split(self, name):
        if name == "all":
            return list(self.rows)
        if name not in SPLITS:
            raise UnknownTokenError(f"unknown split {name!r}")
        return [r for r in self.rows if r.split == name]

    def labels(self, rows):
        return np.array([self.class_index[r.label] for r in rows], dtype=np.int64)

    def class_counts(self, split=None):
        rows = self.rows if split is None else self.split(split)
        counts = Counter(r.label for r in rows)
        return {c: counts.get(c, 0) for c in self.classes}

    def require_all_classes(self, split):
        for name, n in self.class_counts(split).items():
            if n == 0:
                raise EmptyClassError(f"class {name!r} has no {split} samples")

    def load(self, row):
        key = row.path
        if key not in self._cache:
            self._cache[key] = read_image(self.resolve(row))
        return self._cache[key]


def load_manifest(path, check_files=True):
    """Read and validate a manifest CSV; image paths resolve relative to its directory."""
    path = Path(path)
    if not path.is_file():
        raise MissingImageError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HEADER:
            raise ManifestHeaderError(f"{path}: header must be {','.join(HEADER)}, got {header}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(HEADER):
                raise ManifestError(f"{path}:{lineno}: expected {len(HEADER)} fields, got {len(rec)}")
            rows.append(ManifestRow(*(v.strip() for v in rec)))
    ds = Dataset(rows, root=path.parent, check_files=check_files)
    for split in SPLITS:
        counts = ds.class_counts(split)
        logger.info("%s split: %d images, per class %s", split, sum(counts.values()), counts)
    return ds


def write_manifest(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HEADER)
        for r in rows:
            w.writerow((r.path, r.label, r.split, r.view, r.source))
