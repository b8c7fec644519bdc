"""Embedding matrix from normalized logits, linear and kernel PCA, class centroids."""

import logging
from dataclasses import dataclass

import numpy as np

from .convnet import predict_logits
from .data.transforms import preprocess
from .errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass
class EmbeddingMatrix:
    D: np.ndarray  # (d, n): one unit-norm column per image
    labels: np.ndarray  # (n,)
    image_ids: list

    @property
    def shape(self):
        return self.D.shape


def normalize_columns(logits, image_ids=None):
    """L2-normalize each row of (n, d) logits and return them as (d, n) columns."""
    logits = np.asarray(logits, dtype=np.float64)
    norms = np.sqrt((logits**2).sum(axis=1))
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        name = image_ids[zero[0]] if image_ids else f"#{zero[0]}"
        raise ValidationError(f"zero logit vector for image {name}, cannot normalize")
    return (logits / norms[:, None]).T.copy()


def extract_embeddings(model, dataset, split="all"):
    rows = dataset.split(split)
    if not rows:
        raise ValidationError(f"split {split!r} is empty")
    size = model.config.image_size
    images = np.array([preprocess(dataset.load(r), size) for r in rows], dtype=model.dtype)
    ids = [r.path for r in rows]
    D = normalize_columns(predict_logits(model, images), ids)
    return EmbeddingMatrix(D, dataset.labels(rows), ids)


# -- symmetric eigensolver -----------------------------------------------------


def jacobi_eigh(A, tol=1e-12, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius norm falls below
    ``tol * ||A||_F``. Returns (eigenvalues descending, eigenvectors as columns).
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValidationError(f"expected a square matrix, got {A.shape}")
    V = np.eye(n)
    scale = np.sqrt((A**2).sum())
    if scale == 0:
        return np.zeros(n), V
    threshold = tol * scale
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt((A[offdiag] ** 2).sum())
        if off < threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        logger.warning("Jacobi did not converge in %d sweeps", max_sweeps)
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def fix_signs(B):
    """Flip columns so each one's largest-magnitude entry is positive."""
    B = B.copy()
    for j in range(B.shape[1]):
        i = np.argmax(np.abs(B[:, j]))
        if B[i, j] < 0:
            B[:, j] = -B[:, j]
    return B


# -- linear PCA ----------------------------------------------------------------


@dataclass
class PcaBasis:
    B: np.ndarray  # (d, k) orthonormal columns
    eigenvalues: np.ndarray  # (k,) descending, of the scatter matrix
    mean: np.ndarray  # (d,), zeros when fitted without centering
    all_eigenvalues: np.ndarray  # full spectrum, descending

    @property
    def k(self):
        return self.B.shape[1]


def scatter_matrix(D, mean):
    C = D - mean[:, None]
    return C @ C.T


def pca_fit(D, k, center=True):
    """Top-``k`` principal directions of the columns of D (d x n).

    With ``center`` the scatter matrix of mean-centred columns is used; without
    it, the raw D D^T (the uncentred objective).
    """
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2:
        raise ValidationError(f"D must be 2-D, got {D.shape}")
    d, n = D.shape
    if n < 2:
        raise ValidationError(f"need at least 2 columns, got {n}")
    max_rank = min(d, n - 1 if center else n)
    if not 1 <= k <= max_rank:
        raise ValidationError(f"k={k} exceeds achievable rank {max_rank} for a {d}x{n} matrix")
    mean = D.mean(axis=1) if center else np.zeros(d)
    w, V = jacobi_eigh(scatter_matrix(D, mean))
    w = np.maximum(w, 0.0)
    return PcaBasis(fix_signs(V[:, :k]), w[:k].copy(), mean, w)


def pca_project(basis, D):
    """k x n coordinates B^T (d_i - mean)."""
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != basis.B.shape[0]:
        raise ValidationError(f"D shape {D.shape} does not match basis dimension {basis.B.shape[0]}")
    return basis.B.T @ (D - basis.mean[:, None])


def reconstruction_error(basis, D):
    """sum_i ||c_i - B B^T c_i||^2 over the (centred) columns c_i."""
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != basis.B.shape[0]:
        raise ValidationError(f"D shape {D.shape} does not match basis dimension {basis.B.shape[0]}")
    C = D - basis.mean[:, None]
    R = C - basis.B @ (basis.B.T @ C)
    return float((R**2).sum())


def projected_variance(B, D, mean):
    C = np.asarray(D, dtype=np.float64) - mean[:, None]
    return float(((B.T @ C) ** 2).sum())


# -- kernel PCA ----------------------------------------------------------------


def rbf_kernel(D, gamma):
    """K_ij = exp(-gamma * ||d_i - d_j||^2) over the columns of D."""
    sq = (D**2).sum(axis=0)
    dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (D.T @ D), 0.0)
    np.fill_diagonal(dist, 0.0)
    return np.exp(-gamma * dist)


def center_kernel(Kmat):
    n = Kmat.shape[0]
    H = np.eye(n) - np.full((n, n), 1.0 / n)
    return H @ Kmat @ H


def kernel_pca(D, k, gamma, rank_tol=1e-8):
    """k x n coordinates of the training columns under RBF kernel PCA.

    Eigenvectors of the double-centred kernel are scaled by 1/sqrt(lambda), so
    the coordinates equal sqrt(lambda_j) * v_j.
    """
    if gamma <= 0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[1]
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} out of range for {n} points")
    Kc = center_kernel(rbf_kernel(D, gamma))
    Kc = (Kc + Kc.T) / 2
    w, V = np.linalg.eigh(Kc)
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    rank = int(np.sum(w > rank_tol * n))
    if k > rank:
        raise ValidationError(f"kernel matrix has numerical rank {rank}, cannot extract {k} components")
    alphas = fix_signs(V[:, :k]) / np.sqrt(w[:k])
    return (Kc @ alphas).T


# -- aggregation ---------------------------------------------------------------


def class_centroids(coords, labels, num_classes=None):
    """(num_classes, k) array of per-class mean coordinates from k x n coords."""
    coords = np.asarray(coords, dtype=np.float64)
    labels = np.asarray(labels)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    out = np.zeros((num_classes, coords.shape[0]))
    for c in range(num_classes):
        cols = coords[:, labels == c]
        if cols.shape[1] == 0:
            raise ValidationError(f"class {c} has no points")
        out[c] = cols.mean(axis=1)
    return out
