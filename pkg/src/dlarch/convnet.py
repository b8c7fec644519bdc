"""Cell-stacked convolutional classifier and its training loop.

Architecture: stem conv -> cells -> global average pool -> linear head.
A normal cell is ``x + relu(conv3x3(x))``; a reduction cell is
``relu(conv3x3/2(x))`` with twice the channels. There is no batch
normalization, so every sample is processed independently of its batch.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from ._accel import get_num_threads, set_num_threads
from .data.transforms import augment, preprocess
from .errors import ValidationError

logger = logging.getLogger(__name__)

CELL_CODES = {"N": "normal", "R": "reduction"}


def parse_cells(cells):
    """Accept ``"NNR"`` or a sequence of ``"normal"``/``"reduction"``."""
    if isinstance(cells, str):
        try:
            return tuple(CELL_CODES[ch] for ch in cells.strip().upper())
        except KeyError:
            raise ValidationError(f"cells must use letters N/R, got {cells!r}") from None
    out = tuple(cells)
    for c in out:
        if c not in CELL_CODES.values():
            raise ValidationError(f"unknown cell kind {c!r}")
    return out


def cells_code(cells):
    return "".join(c[0].upper() for c in cells)


def reduced_size(size):
    """Spatial size after a 3x3, stride-2, pad-1 convolution."""
    return (size - 1) // 2 + 1


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int
    image_size: int = 64
    in_channels: int = 3
    stem_channels: int = 8
    cells: tuple = ("reduction", "reduction", "normal")
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cells", parse_cells(self.cells))

    def feature_shape(self):
        """(channels, size) of the final cell's feature maps."""
        ch, size = self.stem_channels, self.image_size
        for kind in self.cells:
            if kind == "reduction":
                ch, size = ch * 2, reduced_size(size)
        return ch, size

    def validate(self):
        if self.num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.image_size < 1 or self.stem_channels < 1 or self.in_channels < 1:
            raise ValidationError("image_size, in_channels and stem_channels must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must fit in 64 bits, got {self.seed}")
        ch, size = self.feature_shape()
        if size < 4:
            raise ValidationError(
                f"cells {cells_code(self.cells)} on {self.image_size}px input leave "
                f"{size}x{size} feature maps; need at least 4x4"
            )

    def to_dict(self):
        return {
            "num_classes": self.num_classes,
            "image_size": self.image_size,
            "in_channels": self.in_channels,
            "stem_channels": self.stem_channels,
            "cells": cells_code(self.cells),
            "seed": self.seed,
        }


def parameter_shapes(config):
    """Ordered (name, shape) pairs for every parameter of ``config``."""
    shapes = [
        ("stem.weight", (config.stem_channels, config.in_channels, 3, 3)),
        ("stem.bias", (config.stem_channels,)),
    ]
    ch = config.stem_channels
    for i, kind in enumerate(config.cells):
        out = ch * 2 if kind == "reduction" else ch
        shapes.append((f"cell{i}.weight", (out, ch, 3, 3)))
        shapes.append((f"cell{i}.bias", (out,)))
        ch = out
    shapes.append(("head.weight", (ch, config.num_classes)))
    shapes.append(("head.bias", (config.num_classes,)))
    return shapes


@dataclass
class ForwardResult:
    logits: ad.Tensor
    feature_maps: ad.Tensor


class Model:
    def __init__(self, config, params, class_names=None):
        self.config = config
        self.params = params
        self.class_names = list(class_names) if class_names else None

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def parameters(self):
        return list(self.params.values())

    def num_parameters(self):
        return sum(p.data.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def forward(self, batch):
        """Logits (B, d) and the final cell's feature maps (B, K, u, v)."""
        x = batch if isinstance(batch, ad.Tensor) else ad.Tensor(batch, dtype=self.dtype)
        size = self.config.image_size
        if x.ndim != 4 or x.shape[1] != self.config.in_channels or x.shape[2:] != (size, size):
            raise ValidationError(
                f"expected batch (B, {self.config.in_channels}, {size}, {size}), got {x.shape}"
            )
        p = self.params
        h = ad.relu(ad.conv2d(x, p["stem.weight"], p["stem.bias"], stride=1, padding=1))
        for i, kind in enumerate(self.config.cells):
            w, b = p[f"cell{i}.weight"], p[f"cell{i}.bias"]
            if kind == "normal":
                h = ad.add(h, ad.relu(ad.conv2d(h, w, b, stride=1, padding=1)))
            else:
                h = ad.relu(ad.conv2d(h, w, b, stride=2, padding=1))
        pooled = ad.global_avg_pool(h)
        logits = ad.add_bias(ad.matmul(pooled, p["head.weight"]), p["head.bias"])
        return ForwardResult(logits, h)

    __call__ = forward

    def class_name(self, c):
        return self.class_names[c] if self.class_names else str(c)


def build_model(config, dtype=np.float32, class_names=None):
    """Deterministic He-style initialization from ``config.seed``; biases start at zero."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in parameter_shapes(config):
        if name.endswith("bias"):
            data = np.zeros(shape)
        elif name == "head.weight":
            data = rng.standard_normal(shape) * math.sqrt(1.0 / shape[0])
        else:
            fan_in = shape[1] * shape[2] * shape[3]
            data = rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)
        params[name] = ad.Tensor(data, requires_grad=True, dtype=dtype, name=name)
    return Model(config, params, class_names)


def predict_logits(model, images, batch_size=64):
    """Logits for an (N, C, S, S) array, computed in fixed-size chunks without a graph."""
    out = []
    with ad.no_grad():
        for lo in range(0, len(images), batch_size):
            out.append(model.forward(images[lo:lo + batch_size]).logits.data)
    return np.concatenate(out) if out else np.zeros((0, model.config.num_classes))


def rank_classes(logits):
    """Classes by descending probability, ties by ascending index; returns (order, probs)."""
    probs = ad.softmax(np.asarray(logits, dtype=np.float64))
    order = np.argsort(-probs, axis=-1, kind="stable")
    return order, probs


def predict_topk(model, image, k):
    """Top-``k`` (class, probability) pairs for one preprocessed (C, S, S) image."""
    d = model.config.num_classes
    if not 1 <= k <= d:
        raise ValidationError(f"k must be in [1, {d}], got {k}")
    logits = predict_logits(model, np.asarray(image)[None])[0]
    order, probs = rank_classes(logits)
    return [(int(c), float(probs[c])) for c in order[:k]]


# -- training ------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    lr_schedule: tuple = ((0, 0.1), (20, 0.01))
    batch_size: int = 16
    momentum: float = 0.9
    seed: int = 0
    augment: bool = True
    grad_clip: float = 1.0

    def validate(self):
        if self.grad_clip < 0:
            raise ValidationError("grad_clip must be >= 0 (0 disables clipping)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be >= 1")
        starts = [s for s, _ in self.lr_schedule]
        if not starts or starts[0] != 0:
            raise ValidationError("lr schedule must start at epoch 0")
        if any(b <= a for a, b in zip(starts, starts[1:])) or starts[-1] >= self.epochs:
            raise ValidationError(
                f"lr schedule starts {starts} must increase and stay below {self.epochs} epochs"
            )
        if any(lr <= 0 for _, lr in self.lr_schedule):
            raise ValidationError("learning rates must be positive")
        if not 0 <= self.momentum < 1:
            raise ValidationError(f"momentum must be in [0, 1), got {self.momentum}")

    def lr_at(self, epoch):
        lr = self.lr_schedule[0][1]
        for start, value in self.lr_schedule:
            if epoch >= start:
                lr = value
        return lr

    def rescaled(self, epochs):
        """Same schedule shape compressed or stretched to ``epochs``."""
        sched = tuple(
            (int(round(start * epochs / self.epochs)), lr) for start, lr in self.lr_schedule
        )
        return replace(self, epochs=epochs, lr_schedule=sched)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_top1: float
    test_loss: float
    test_top1: float


@dataclass
class TrainResult:
    model: Model
    history: list = field(default_factory=list)


def clip_grad_norm(params, max_norm):
    """Scale all gradients so their joint L2 norm is at most ``max_norm``; returns the norm."""
    total = 0.0
    for p in params:
        total += float(np.dot(p.grad.ravel().astype(np.float64), p.grad.ravel()))
    norm = total ** 0.5
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad = p.grad * p.dtype.type(scale)
    return norm


def load_split(dataset, split, image_size):
    """Decoded uint8 images and label indices for one split."""
    rows = dataset.split(split)
    return [dataset.load(r) for r in rows], dataset.labels(rows)


def evaluate(model, images, labels, batch_size=64):
    """(mean loss, top-1 %) on preprocessed images; NaNs for an empty set."""
    if len(images) == 0:
        return float("nan"), float("nan")
    logits = predict_logits(model, images, batch_size).astype(np.float64)
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(len(labels)), labels]))
    order = np.argsort(-z, axis=1, kind="stable")
    return loss, 100.0 * float(np.mean(order[:, 0] == labels))


def train(model, dataset, config=None, threads=None, on_epoch=None):
    """Train ``model`` with mini-batch SGD; returns the model and per-epoch history.

    Shuffling and augmentation draw from ``default_rng([seed, epoch])`` so a
    run is fully determined by (config, seed, dataset).
    """
    config = config or TrainConfig()
    config.validate()
    dataset.require_all_classes("train")
    if dataset.num_classes != model.config.num_classes:
        raise ValidationError(
            f"dataset has {dataset.num_classes} classes, model expects {model.config.num_classes}"
        )
    size = model.config.image_size
    raw_train, y_train = load_split(dataset, "train", size)
    raw_test, y_test = load_split(dataset, "test", size)
    x_test = np.array([preprocess(im, size) for im in raw_test], dtype=model.dtype)
    x_plain = None if config.augment else np.array(
        [preprocess(im, size) for im in raw_train], dtype=model.dtype
    )

    prev_threads = get_num_threads()
    if threads is not None:
        set_num_threads(threads)
    opt = ad.SGD(model.parameters(), config.lr_schedule[0][1], config.momentum)
    result = TrainResult(model)
    n = len(raw_train)
    try:
        for epoch in range(config.epochs):
            lr = config.lr_at(epoch)
            rng = np.random.default_rng([config.seed, epoch])
            perm = rng.permutation(n)
            loss_sum, correct = 0.0, 0
            for lo in range(0, n, config.batch_size):
                idx = perm[lo:lo + config.batch_size]
                if config.augment:
                    xb = np.array(
                        [preprocess(augment(raw_train[i], rng), size) for i in idx],
                        dtype=model.dtype,
                    )
                else:
                    xb = x_plain[idx]
                yb = y_train[idx]
                out = model.forward(xb)
                loss = ad.softmax_cross_entropy(out.logits, yb)
                if not np.isfinite(loss.data):
                    raise FloatingPointError(f"loss diverged at epoch {epoch}")
                ad.backward(loss, model.parameters())
                if config.grad_clip:
                    clip_grad_norm(model.parameters(), config.grad_clip)
                opt.step(lr)
                loss_sum += float(loss.data) * len(idx)
                pred = np.argsort(-out.logits.data, axis=1, kind="stable")[:, 0]
                correct += int(np.sum(pred == yb))
            test_loss, test_top1 = evaluate(model, x_test, y_test)
            rec = EpochRecord(epoch, lr, loss_sum / n, 100.0 * correct / n, test_loss, test_top1)
            result.history.append(rec)
            logger.info(
                "epoch %d lr %g train_loss %.4f train_top1 %.2f test_top1 %.2f",
                epoch, lr, rec.train_loss, rec.train_top1, rec.test_top1,
            )
            if on_epoch is not None:
                on_epoch(rec)
    finally:
        set_num_threads(prev_threads)
    return result
