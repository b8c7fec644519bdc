"""Top-k accuracy, per-class and stratified tables, confusion matrices."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .convnet import predict_logits, rank_classes
from .data.transforms import preprocess
from .errors import ValidationError


@dataclass
class PredictionLog:
    """One entry per test image: true label, full ranking, probabilities, tags."""

    true: np.ndarray  # (n,)
    ranked: np.ndarray  # (n, d) class indices, most probable first
    probs: np.ndarray  # (n, d) probabilities in ranked order
    views: list
    sources: list

    def __post_init__(self):
        self.true = np.asarray(self.true, dtype=np.int64)
        self.ranked = np.asarray(self.ranked, dtype=np.int64)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        n = len(self.true)
        if self.ranked.ndim != 2 or self.ranked.shape[0] != n or len(self.views) != n or len(self.sources) != n:
            raise ValidationError("prediction log fields have inconsistent lengths")
        d = self.ranked.shape[1]
        if n and not np.array_equal(np.sort(self.ranked, axis=1), np.tile(np.arange(d), (n, 1))):
            raise ValidationError("each ranking must be a permutation of all classes")

    def __len__(self):
        return len(self.true)

    @property
    def num_classes(self):
        return self.ranked.shape[1]

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return PredictionLog(
            self.true[mask],
            self.ranked[mask],
            self.probs[mask],
            [v for v, m in zip(self.views, mask) if m],
            [s for s, m in zip(self.sources, mask) if m],
        )

    @classmethod
    def from_logits(cls, logits, true, views=None, sources=None):
        order, probs = rank_classes(logits)
        n = len(true)
        return cls(
            true,
            order,
            np.take_along_axis(probs, order, axis=1),
            list(views) if views is not None else ["unknown"] * n,
            list(sources) if sources is not None else ["synthetic"] * n,
        )


def predict_log(model, dataset, split="test"):
    rows = dataset.split(split)
    size = model.config.image_size
    images = np.array([preprocess(dataset.load(r), size) for r in rows], dtype=model.dtype)
    logits = predict_logits(model, images) if rows else np.zeros((0, model.config.num_classes))
    return PredictionLog.from_logits(
        logits, dataset.labels(rows), [r.view for r in rows], [r.source for r in rows]
    )


def hits_at(log, k):
    """Boolean per entry: true label within the top ``k`` of the ranking."""
    return (log.ranked[:, :k] == log.true[:, None]).any(axis=1)


def topk_accuracy(log, k):
    if len(log) == 0:
        raise ValidationError("empty prediction log")
    if not 1 <= k <= log.num_classes:
        raise ValidationError(f"k must be in [1, {log.num_classes}], got {k}")
    return 100.0 * hits_at(log, k).sum() / len(log)


def _top5(log):
    return min(5, log.num_classes)


@dataclass
class AccuracyRow:
    name: str
    top1: float  # None when the class has no entries
    top5: float
    count: int


@dataclass
class AccuracyTable:
    rows: list
    total: AccuracyRow


def per_class_table(log, class_names=None):
    """Per-class top-1/top-5 rows in class-index order plus a micro-averaged total."""
    d = log.num_classes
    names = class_names or [str(c) for c in range(d)]
    k5 = _top5(log)
    h1, h5 = hits_at(log, 1), hits_at(log, k5)
    rows = []
    for c in range(d):
        mask = log.true == c
        n = int(mask.sum())
        if n == 0:
            rows.append(AccuracyRow(names[c], None, None, 0))
        else:
            rows.append(AccuracyRow(names[c], 100.0 * h1[mask].sum() / n, 100.0 * h5[mask].sum() / n, n))
    n = len(log)
    total = AccuracyRow(
        "TOTAL",
        100.0 * h1.sum() / n if n else None,
        100.0 * h5.sum() / n if n else None,
        n,
    )
    return AccuracyTable(rows, total)


def stratified_accuracy(log, sources=("self", "web"), views=("indoor", "outdoor")):
    """{(source, view): AccuracyRow} over the source x view grid; empty cells carry None."""
    out = {}
    k5 = _top5(log)
    src = np.array(log.sources, dtype=object)
    vw = np.array(log.views, dtype=object)
    for s in sources:
        for v in views:
            mask = (src == s) & (vw == v)
            n = int(mask.sum())
            if n == 0:
                out[(s, v)] = AccuracyRow(f"{s}/{v}", None, None, 0)
            else:
                sub = log.subset(mask)
                out[(s, v)] = AccuracyRow(
                    f"{s}/{v}", topk_accuracy(sub, 1), topk_accuracy(sub, k5), n
                )
    return out


def confusion_matrix(log):
    """M[true, predicted-at-rank-1] counts."""
    if len(log) == 0:
        raise ValidationError("empty prediction log")
    d = log.num_classes
    M = np.zeros((d, d), dtype=np.int64)
    np.add.at(M, (log.true, log.ranked[:, 0]), 1)
    return M


# -- formatting ----------------------------------------------------------------


def fmt_pct(x):
    """Two decimals, truncated rather than rounded; ``None`` renders as N/A."""
    if x is None:
        return "N/A"
    return f"{math.floor(round(x * 100, 6)) / 100:.2f}"


def format_accuracy_table(table, columns=2):
    """Text table with ``columns`` side-by-side blocks of (class, top-1, top-5)."""
    entries = table.rows + [table.total]
    per_col = -(-len(entries) // columns)
    name_w = max(len(r.name) for r in entries)
    head = "  ".join([f"{'Class':<{name_w}}  {'Top1':>6}  {'Top5':>6}"] * columns)
    lines = [head]
    for i in range(per_col):
        cells = []
        for j in range(columns):
            idx = j * per_col + i
            if idx < len(entries):
                r = entries[idx]
                cells.append(f"{r.name:<{name_w}}  {fmt_pct(r.top1):>6}  {fmt_pct(r.top5):>6}")
        lines.append("  ".join(cells))
    return "\n".join(lines)


def format_strata_table(strata, sources=("self", "web"), views=("indoor", "outdoor")):
    """Source-by-view grid, one column per (source, view) pair."""
    labels = {"self": "Self-taken Images", "web": "Internet Images", "synthetic": "Synthetic Images"}
    width = 9
    top = "Image Source".ljust(20) + "".join(labels.get(s, s).ljust(width * len(views)) for s in sources)
    sub = "Image Perspective".ljust(20) + "".join(
        v.capitalize().ljust(width) for _ in sources for v in views
    )
    rows = [top.rstrip(), sub.rstrip()]
    for label, attr in (("Top1 Accuracy", "top1"), ("Top5 Accuracy", "top5")):
        rows.append(
            (label.ljust(20) + "".join(
                fmt_pct(getattr(strata[(s, v)], attr)).ljust(width) for s in sources for v in views
            )).rstrip()
        )
    return "\n".join(rows)


def write_report_csv(path, table):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("class", "top1", "top5"))
        for r in table.rows + [table.total]:
            w.writerow((r.name, fmt_pct(r.top1), fmt_pct(r.top5)))


def write_strata_csv(path, strata):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("source", "view", "top1", "top5", "count"))
        for (s, v), r in strata.items():
            w.writerow((s, v, fmt_pct(r.top1), fmt_pct(r.top5), r.count))


def write_confusion_csv(path, M, class_names):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(list(class_names))
        for row in M:
            w.writerow([int(v) for v in row])

