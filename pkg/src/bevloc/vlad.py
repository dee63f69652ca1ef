"""Global descriptor aggregation: k-means codebook plus soft-assignment VLAD.

A codebook of K cluster centers is learned from a corpus of local features
with Lloyd's algorithm (k-means++ seeding, deterministic under a seed).
Aggregation soft-assigns each feature to the centers with softmax weights of
negative squared distances sharpened by ``alpha``, accumulates per-center
residual sums, intra-normalizes each block, concatenates, and L2-normalizes
the whole vector.  A frame with no features aggregates to the zero vector so
empty scenes stay indexable; they simply match nothing well.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .features import LocalFeatureSet

DEFAULT_CLUSTERS = 64

CODEBOOK_MAGIC = b"I2PC"
CODEBOOK_VERSION = 1

_MAX_LLOYD_ITERATIONS = 100
_MIN_SPREAD = 1e-12


@dataclass(frozen=True)
class Codebook:
    """K cluster centers plus the soft-assignment sharpness alpha."""

    centers: np.ndarray  # (K, d) float64
    alpha: float

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=np.float64)
        if centers.ndim != 2 or centers.shape[0] < 2:
            raise ValueError("codebook needs a (K, d) center matrix with K >= 2")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        diff = centers[:, None, :] - centers[None, :, :]
        dist = np.einsum("ijk,ijk->ij", diff, diff)
        np.fill_diagonal(dist, np.inf)
        if dist.min() == 0.0:
            raise ValueError("codebook centers must be pairwise distinct")
        object.__setattr__(self, "centers", centers)

    @property
    def n_clusters(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


def _squared_distances(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # (N, K) matrix of squared Euclidean distances.
    sq = (X * X).sum(axis=1)[:, None] + (centers * centers).sum(axis=1)[None, :]
    sq -= 2.0 * X @ centers.T
    return np.maximum(sq, 0.0)


def _kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    centers[0] = X[rng.integers(n)]
    closest = _squared_distances(X, centers[:1]).ravel()
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            raise ValueError(f"corpus has fewer than {k} distinct features")
        centers[i] = X[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, _squared_distances(X, centers[i:i + 1]).ravel())
    return centers


def lloyd_kmeans(X: np.ndarray, k: int, seed: int,
                 max_iterations: int = _MAX_LLOYD_ITERATIONS):
    """Run Lloyd's algorithm with k-means++ seeding.

    Returns ``(centers, labels, objective_trace)`` where the trace holds the
    sum of squared distances after each assignment step; it is non-increasing.
    Empty clusters are reseeded to the point farthest from its own center.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("feature corpus must be a (N, d) matrix")
    if len(X) < k:
        raise ValueError(f"need at least {k} features, got {len(X)}")

    rng = np.random.default_rng(seed)
    centers = _kmeans_plusplus(X, k, rng)
    labels = None
    trace = []
    for _ in range(max_iterations):
        sq = _squared_distances(X, centers)
        new_labels = sq.argmin(axis=1)
        point_err = sq[np.arange(len(X)), new_labels]
        trace.append(point_err.sum())
        if labels is not None and np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels

        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            order = np.argsort(point_err)[::-1]
            taken = 0
            for j in np.nonzero(~nonempty)[0]:
                centers[j] = X[order[taken]]
                taken += 1
    return centers, labels, np.asarray(trace)


def train_codebook(corpus, k: int = DEFAULT_CLUSTERS, seed: int = 0) -> Codebook:
    """Learn a codebook from local feature sets (or a raw (N, d) matrix).

    ``alpha`` is tied to the cluster spread at convergence:
    ``alpha = 1 / (2 * sigma^2)`` with sigma the mean nearest-center distance.
    """
    if isinstance(corpus, np.ndarray):
        X = np.asarray(corpus, dtype=np.float64)
    else:
        parts = [fs.descriptors for fs in corpus if len(fs)]
        X = np.concatenate(parts, axis=0) if parts else np.zeros((0, 1))
    centers, labels, _ = lloyd_kmeans(X, k, seed)
    nearest = np.sqrt(_squared_distances(X, centers).min(axis=1))
    sigma = max(float(nearest.mean()), _MIN_SPREAD)
    return Codebook(centers, alpha=1.0 / (2.0 * sigma * sigma))


def aggregate(features: LocalFeatureSet, codebook: Codebook) -> np.ndarray:
    """Aggregate local features into a unit-norm global descriptor.

    Returns the zero vector of length K*d when the feature set is empty.
    """
    K, d = codebook.n_clusters, codebook.dim
    if len(features) == 0:
        return np.zeros(K * d, dtype=np.float64)
    X = np.asarray(features.descriptors, dtype=np.float64)
    if X.shape[1] != d:
        raise ValueError(f"feature dim {X.shape[1]} does not match codebook dim {d}")
    # Accumulate in a canonical feature order so the result is bitwise
    # independent of the order features arrive in.
    X = X[np.lexsort(X.T[::-1])]

    sq = _squared_distances(X, codebook.centers)
    logits = -codebook.alpha * sq
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)   # (N, K), rows sum to 1

    # V_k = sum_i w_ik * (x_i - c_k)
    blocks = weights.T @ X - weights.sum(axis=0)[:, None] * codebook.centers
    norms = np.linalg.norm(blocks, axis=1)
    nonzero = norms > 0
    blocks[nonzero] /= norms[nonzero, None]
    vec = blocks.ravel()
    total = np.linalg.norm(vec)
    return vec / total if total > 0 else vec


def save_codebook(codebook: Codebook, path: str | os.PathLike) -> None:
    """Write a codebook: magic, version u16, K u32, d u32, alpha f64, centers f64."""
    header = struct.pack("<4sHIId", CODEBOOK_MAGIC, CODEBOOK_VERSION,
                         codebook.n_clusters, codebook.dim, codebook.alpha)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(codebook.centers.astype("<f8").tobytes())


def load_codebook(path: str | os.PathLike) -> Codebook:
    """Read a codebook written by :func:`save_codebook`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    head = struct.calcsize("<4sHIId")
    if len(raw) < head:
        raise FormatError(f"{path}: truncated codebook header")
    magic, version, k, d, alpha = struct.unpack_from("<4sHIId", raw)
    if magic != CODEBOOK_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != CODEBOOK_VERSION:
        raise FormatError(f"{path}: unsupported codebook version {version}")
    expected = head + 8 * k * d
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(raw)}")
    centers = np.frombuffer(raw, dtype="<f8", offset=head).reshape(k, d).copy()
    return Codebook(centers, alpha)
