"""k-means: k-means++ seeding, Lloyd iterations with transfer refinement, restarts, CSV reporting."""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .errors import ValidationError


@dataclass
class ClusterResult:
    points: np.ndarray  # (m, p)
    labels: np.ndarray  # (m,)
    centroids: np.ndarray  # (k, p)
    inertia: float
    n_iter: int
    inertia_history: list = field(default_factory=list)
    ids: list = None


def squared_distances(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    return (diff**2).sum(axis=2)


def inertia_of(points, labels, centroids):
    return float(((points - centroids[labels]) ** 2).sum())


def kmeans_plusplus(points, k, rng):
    """D^2-weighted seeding; duplicate points are never picked twice while others remain."""
    m = len(points)
    chosen = [int(rng.integers(m))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(m, p=d2 / total))
        else:
            rest = np.setdiff1d(np.arange(m), chosen)
            idx = int(rng.choice(rest))
        chosen.append(idx)
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _repair_empty(points, labels, centroids, k):
    """Move each empty centroid onto the point farthest from its own centroid."""
    for j in range(k):
        if np.any(labels == j):
            continue
        counts = np.bincount(labels, minlength=k)
        d2 = ((points - centroids[labels]) ** 2).sum(axis=1)
        d2[counts[labels] < 2] = -1.0
        far = int(np.argmax(d2))
        centroids[j] = points[far]
        labels[far] = j
    return labels, centroids


def _transfer_pass(points, labels, centroids):
    """One sweep of single-point moves that strictly lower inertia; returns True if any moved.

    Moving x from cluster a (size n_a) to b (size n_b) changes inertia by
    n_b/(n_b+1)*|x-c_b|^2 - n_a/(n_a-1)*|x-c_a|^2; centroids are updated in place.
    """
    k = len(centroids)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    moved = False
    for i, x in enumerate(points):
        a = labels[i]
        if counts[a] < 2:
            continue
        d2 = ((centroids - x) ** 2).sum(axis=1)
        remove = counts[a] / (counts[a] - 1) * d2[a]
        add = counts / (counts + 1) * d2
        add[a] = np.inf
        b = int(np.argmin(add))
        if add[b] < remove * (1 - 1e-12):
            centroids[a] = (centroids[a] * counts[a] - x) / (counts[a] - 1)
            centroids[b] = (centroids[b] * counts[b] + x) / (counts[b] + 1)
            counts[a] -= 1
            counts[b] += 1
            labels[i] = b
            moved = True
    return moved


def lloyd(points, init, max_iter):
    """Lloyd iterations from ``init`` with single-point transfer refinement at each fixed point.

    Returns (labels, centroids, n_iter, history) where ``history`` holds the
    inertia after every Lloyd update and every refinement sweep.
    """
    k = len(init)
    centroids = init.copy()
    labels = np.argmin(squared_distances(points, centroids), axis=1)
    history = []
    for it in range(1, max_iter + 1):
        labels, centroids = _repair_empty(points, labels, centroids, k)
        for j in range(k):
            centroids[j] = points[labels == j].mean(axis=0)
        history.append(inertia_of(points, labels, centroids))
        new = np.argmin(squared_distances(points, centroids), axis=1)
        if np.array_equal(new, labels):
            if not _transfer_pass(points, labels, centroids):
                return labels, centroids, it, history
            for j in range(k):
                centroids[j] = points[labels == j].mean(axis=0)
            history.append(inertia_of(points, labels, centroids))
            new = np.argmin(squared_distances(points, centroids), axis=1)
        labels = new
    return labels, centroids, max_iter, history


def kmeans(points, k, seed=0, max_iter=300, n_init=10, ids=None):
    """Best of ``n_init`` seeded Lloyd runs by inertia; restart r uses ``default_rng([seed, r])``."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    m = len(points)
    if not 1 <= k <= m:
        raise ValidationError(f"k={k} must be between 1 and the number of points ({m})")
    if max_iter < 1 or n_init < 1:
        raise ValidationError("max_iter and n_init must be >= 1")
    best = None
    for r in range(n_init):
        rng = np.random.default_rng([seed, r])
        labels, centroids, n_iter, history = lloyd(points, kmeans_plusplus(points, k, rng), max_iter)
        inertia = inertia_of(points, labels, centroids)
        if best is None or inertia < best.inertia:
            best = ClusterResult(points, labels, centroids, inertia, n_iter, history, ids)
    return best


def adjusted_rand_index(a, b):
    """Chance-corrected agreement between two labelings (1.0 for identical partitions)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValidationError("labelings differ in length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    sum_cells = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    total = comb(len(a), 2)
    expected = sum_a * sum_b / total if total else 0.0
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def _fmt(x):
    return f"{x:.9g}"


def write_cluster_csv(path, result, class_names):
    """``class,pc1,...,cluster`` rows in class-index order."""
    dims = result.points.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["class"] + [f"pc{j + 1}" for j in range(dims)] + ["cluster"])
        for name, pt, lab in zip(class_names, result.points, result.labels):
            w.writerow([name] + [_fmt(v) for v in pt] + [int(lab)])


def write_coords_csv(path, image_ids, labels, coords, class_names):
    """``image,label,pc1,...`` rows, one per image; ``coords`` is k x n."""
    coords = np.asarray(coords)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["image", "label"] + [f"pc{j + 1}" for j in range(coords.shape[0])])
        for i, img in enumerate(image_ids):
            w.writerow([img, class_names[labels[i]]] + [_fmt(v) for v in coords[:, i]])


def cluster_report(result, class_names, path):
    if len(class_names) != len(result.labels):
        raise ValidationError(f"{len(class_names)} names for {len(result.labels)} points")
    write_cluster_csv(path, result, class_names)
