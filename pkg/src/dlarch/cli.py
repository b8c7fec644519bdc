"""Command-line entry point: ``dlarch {synth,train,eval,gradcam,cluster}``.

Exit codes: 0 success, 2 invalid input or usage, 1 any other failure.
"""

import argparse
import csv
import logging
import sys
from collections import defaultdict
from pathlib import Path

from . import gradcam
from ._accel import set_num_threads
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .cluster import kmeans, write_cluster_csv, write_coords_csv
from .config import RunConfig, load_run_config
from .convnet import ModelConfig, build_model, predict_topk, train
from .data.manifest import Dataset, ManifestRow, load_manifest
from .data.ppm import read_image
from .data.synth import SynthSpec, generate_synthetic
from .data.transforms import preprocess
from .embedding import class_centroids, extract_embeddings, kernel_pca, pca_fit, pca_project
from .errors import ValidationError
from .evaluation import (
    confusion_matrix,
    per_class_table,
    predict_log,
    stratified_accuracy,
    write_confusion_csv,
    write_report_csv,
    write_strata_csv,
)

logger = logging.getLogger("dlarch")


def cmd_synth(args):
    spec = SynthSpec(
        num_classes=args.classes,
        samples_per_class=args.per_class,
        image_size=args.size,
        placement="fixed-quadrant" if args.fixed_quadrant else "random",
        seed=args.seed,
        families=args.families,
        train_fraction=args.train_fraction,
    )
    corpus = generate_synthetic(spec, args.out)
    logger.info("wrote %d images and %s", len(corpus.rows), corpus.manifest_path)


def resplit(dataset, ratio):
    """Stratified train/test split by path order within each class."""
    by_class = defaultdict(list)
    for r in dataset.rows:
        by_class[r.label].append(r)
    rows = []
    for label in sorted(by_class):
        members = sorted(by_class[label], key=lambda r: r.path)
        n_train = max(1, int(round(ratio * len(members))))
        for i, r in enumerate(members):
            rows.append(ManifestRow(r.path, r.label, "train" if i < n_train else "test", r.view, r.source))
    return Dataset(rows, root=dataset.root, check_files=False)


def _fmt(x):
    return f"{x:.9g}"


def cmd_train(args):
    cfg = load_run_config(args.config) if args.config else RunConfig()
    dataset = load_manifest(args.data)
    if not dataset.split("test"):
        logger.info("manifest has no test rows; splitting %.2f/%.2f per class", cfg.split_ratio, 1 - cfg.split_ratio)
        dataset = resplit(dataset, cfg.split_ratio)
    mc = ModelConfig(
        num_classes=dataset.num_classes,
        image_size=cfg.image_size,
        stem_channels=cfg.stem_channels,
        cells=cfg.cells,
        seed=cfg.seed,
    )
    model = build_model(mc, class_names=dataset.classes)
    result = train(model, dataset, cfg.train_config(), threads=args.threads)
    save_checkpoint(model, args.out)
    if args.history:
        with open(args.history, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("epoch", "lr", "train_loss", "train_top1", "test_top1"))
            for r in result.history:
                w.writerow((r.epoch, _fmt(r.lr), _fmt(r.train_loss), f"{r.train_top1:.2f}", f"{r.test_top1:.2f}"))


def _class_names(model, dataset=None):
    if model.class_names:
        return model.class_names
    if dataset is not None:
        return dataset.classes
    return [str(c) for c in range(model.config.num_classes)]


def _check_classes(model, dataset):
    if model.class_names and model.class_names != dataset.classes:
        raise ValidationError(
            f"manifest classes {dataset.classes} differ from checkpoint classes {model.class_names}"
        )
    if dataset.num_classes != model.config.num_classes:
        raise ValidationError(
            f"manifest has {dataset.num_classes} classes, checkpoint has {model.config.num_classes}"
        )


def cmd_eval(args):
    model = load_checkpoint(args.ckpt)
    dataset = load_manifest(args.data)
    _check_classes(model, dataset)
    log = predict_log(model, dataset, args.split)
    if len(log) == 0:
        raise ValidationError(f"split {args.split!r} is empty")
    names = _class_names(model, dataset)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = per_class_table(log, names)
    write_report_csv(out / "report.csv", table)
    write_strata_csv(out / "strata.csv", stratified_accuracy(log))
    write_confusion_csv(out / "confusion.csv", confusion_matrix(log), names)
    logger.info("top-1 %.2f top-5 %.2f over %d images", table.total.top1, table.total.top5, len(log))


def cmd_gradcam(args):
    model = load_checkpoint(args.ckpt)
    d = model.config.num_classes
    names = _class_names(model)
    image = preprocess(read_image(args.image), model.config.image_size)
    if args.top < 1:
        raise ValidationError(f"--top must be >= 1, got {args.top}")
    top = predict_topk(model, image, min(args.top, d))
    if args.class_index is not None:
        if not 0 <= args.class_index < d:
            raise ValidationError(f"class {args.class_index} out of range for {d} classes")
        targets = [args.class_index]
    else:
        targets = [c for c, _ in top]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("rank", "class", "probability"))
        for rank, (c, p) in enumerate(top, start=1):
            w.writerow((rank, names[c], _fmt(p)))
    display = gradcam.display_image(image)
    size = model.config.image_size
    for c in targets:
        heat = gradcam.explain(model, image, c)
        (out / f"heatmap_c{c:02d}.pgm").write_bytes(gradcam.heatmap_pgm(heat))
        overlay = gradcam.render_overlay(display, gradcam.upsample(heat.values, size))
        (out / f"overlay_c{c:02d}.ppm").write_bytes(overlay)
        logger.info("class %s: heatmap max %.4g", names[c], heat.max_value)


def cmd_cluster(args):
    model = load_checkpoint(args.ckpt)
    dataset = load_manifest(args.data)
    _check_classes(model, dataset)
    names = _class_names(model, dataset)
    emb = extract_embeddings(model, dataset, args.split)
    if args.kernel == "rbf":
        coords = kernel_pca(emb.D, args.pc, args.gamma)
    else:
        basis = pca_fit(emb.D, args.pc, center=not args.no_center)
        coords = pca_project(basis, emb.D)
    centroids = class_centroids(coords, emb.labels, len(names))
    result = kmeans(centroids, args.k, seed=args.seed, n_init=args.n_init, ids=names)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_coords_csv(out / "pca_coords.csv", emb.image_ids, emb.labels, coords, names)
    write_cluster_csv(out / "clusters.csv", result, names)
    logger.info("k-means inertia %.6g over %d classes", result.inertia, len(names))


def build_parser():
    p = argparse.ArgumentParser(prog="dlarch", description=__doc__.splitlines()[0])
    p.add_argument("--log-level", default="INFO", help="logging level (default INFO)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic glyph corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--per-class", type=int, default=50)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--fixed-quadrant", action="store_true")
    s.add_argument("--families", type=int, default=0, help="group classes into this many pattern families")
    s.add_argument("--train-fraction", type=float, default=0.8)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a classifier and write a checkpoint")
    t.add_argument("--config", help="key=value run config (defaults if omitted)")
    t.add_argument("--data", required=True, help="manifest CSV")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--history", help="per-epoch history CSV")
    t.add_argument("--threads", type=int, default=1)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="accuracy tables for a checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out-dir", required=True)
    e.add_argument("--split", default="test", choices=("train", "test", "all"))
    e.add_argument("--threads", type=int, default=1)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcam", help="class activation heatmaps for one image")
    g.add_argument("--ckpt", required=True)
    g.add_argument("--image", required=True)
    sel = g.add_mutually_exclusive_group()
    sel.add_argument("--class", dest="class_index", type=int)
    sel.add_argument("--top", type=int, default=4)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_gradcam)

    c = sub.add_parser("cluster", help="PCA + k-means over class embeddings")
    c.add_argument("--ckpt", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--k", type=int, default=4)
    c.add_argument("--pc", type=int, default=2)
    c.add_argument("--out-dir", required=True)
    c.add_argument("--kernel", choices=("linear", "rbf"), default="linear")
    c.add_argument("--gamma", type=float, default=1.0)
    c.add_argument("--no-center", action="store_true")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--n-init", type=int, default=10)
    c.add_argument("--split", default="all", choices=("train", "test", "all"))
    c.add_argument("--threads", type=int, default=1)
    c.set_defaults(func=cmd_cluster)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(message)s", stream=sys.stderr)
    try:
        threads = getattr(args, "threads", 1)
        if threads < 1:
            raise ValidationError(f"--threads must be >= 1, got {threads}")
        set_num_threads(threads)
        args.func(args)
    except (ValidationError, CheckpointError, FileNotFoundError) as exc:
        print(f"dlarch: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"dlarch: error: {exc}", file=sys.stderr)
        return 1
    finally:
        set_num_threads(1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
