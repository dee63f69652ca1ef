"""Metric learning on global descriptors with a lazy triplet loss.

Frames are labeled by ground-truth pose distance: positives lie within
``d_pos`` meters of the query, negatives beyond ``d_neg``.  The loss embeds
descriptors through a linear map ``W`` and hinges the gap between the closest
positive and each negative:

    loss = max_j [ m + delta_pos - delta_neg_j ]_+

with squared Euclidean distances delta and delta_pos the minimum over the
positives.  Training is plain SGD on exact subgradients; after a configurable
epoch the random negatives are replaced by the hardest geometric negatives
(closest in embedding space).  Everything is deterministic under a seed.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

EMBEDDING_MAGIC = b"I2PW"
EMBEDDING_VERSION = 1

DEFAULT_MARGIN = 0.5
DEFAULT_N_POS = 2
DEFAULT_N_NEG = 10
DEFAULT_D_POS = 10.0
DEFAULT_D_NEG = 50.0
DEFAULT_HARD_MINING_START = 10
DEFAULT_LEARNING_RATE = 0.01
DEFAULT_EMBEDDING_DIM = 256


@dataclass(frozen=True)
class TripletConfig:
    """Radii and counts that turn poses into triplet supervision."""

    margin_m: float = DEFAULT_MARGIN
    n_pos: int = DEFAULT_N_POS
    n_neg: int = DEFAULT_N_NEG
    d_pos: float = DEFAULT_D_POS
    d_neg: float = DEFAULT_D_NEG
    hard_mining_start_epoch: int = DEFAULT_HARD_MINING_START

    def __post_init__(self):
        if not self.margin_m > 0:
            raise ValueError("margin_m must be positive")
        if not (self.d_neg > self.d_pos > 0):
            raise ValueError("need d_neg > d_pos > 0")
        if self.n_pos < 1 or self.n_neg < 1:
            raise ValueError("n_pos and n_neg must be at least 1")


@dataclass(frozen=True)
class TripletBatch:
    """One query with its sampled positive and negative descriptors."""

    query: np.ndarray       # (D,)
    positives: np.ndarray   # (n_pos, D)
    negatives: np.ndarray   # (n_neg, D)

    def __post_init__(self):
        q = np.asarray(self.query, dtype=np.float64)
        P = np.atleast_2d(np.asarray(self.positives, dtype=np.float64))
        N = np.atleast_2d(np.asarray(self.negatives, dtype=np.float64))
        if q.ndim != 1 or P.shape[1] != q.shape[0] or N.shape[1] != q.shape[0]:
            raise ValueError("query, positives, and negatives must share one dimension")
        if len(P) == 0 or len(N) == 0:
            raise ValueError("need at least one positive and one negative")
        object.__setattr__(self, "query", q)
        object.__setattr__(self, "positives", P)
        object.__setattr__(self, "negatives", N)


@dataclass
class EmbeddingMap:
    """Linear embedding z = W v with SGD bookkeeping."""

    W: np.ndarray                                  # (e, D)
    learning_rate: float = DEFAULT_LEARNING_RATE
    epoch: int = 0

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] > W.shape[1]:
            raise ValueError("W must be (e, D) with e <= D")
        if not np.isfinite(W).all():
            raise ValueError("W must be finite")
        self.W = W

    @classmethod
    def identity(cls, input_dim: int, output_dim: int | None = None,
                 learning_rate: float = DEFAULT_LEARNING_RATE) -> "EmbeddingMap":
        """The initialization used by training: top ``e`` rows of the identity."""
        e = min(output_dim if output_dim is not None else DEFAULT_EMBEDDING_DIM,
                input_dim)
        return cls(np.eye(e, input_dim), learning_rate=learning_rate)

    @property
    def output_dim(self) -> int:
        return self.W.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    def embed(self, descriptors: np.ndarray) -> np.ndarray:
        """Apply the map to one (D,) vector or a stack (N, D)."""
        v = np.asarray(descriptors, dtype=np.float64)
        return v @ self.W.T


def _positions(poses) -> np.ndarray:
    return np.asarray([getattr(p, "position", p) for p in poses], dtype=np.float64)


def _candidate_sets(positions: np.ndarray, cfg: TripletConfig):
    """Per query: index arrays of geometric positives and negatives.

    Queries without enough of either are dropped; that silent skip is the
    contract, since sparse trajectories legitimately starve some frames.
    """
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    out = []
    for qi in range(len(positions)):
        pos = np.nonzero((dist[qi] <= cfg.d_pos) & (np.arange(len(positions)) != qi))[0]
        neg = np.nonzero(dist[qi] > cfg.d_neg)[0]
        if len(pos) >= cfg.n_pos and len(neg) >= cfg.n_neg:
            out.append((qi, pos, neg))
    return out


def select_triplets(poses, descriptors, cfg: TripletConfig,
                    seed: int) -> list[TripletBatch]:
    """Sample one triplet batch per eligible query, uniformly under the seed."""
    descriptors = np.asarray(descriptors, dtype=np.float64)
    rng = np.random.default_rng(seed)
    batches = []
    for qi, pos, neg in _candidate_sets(_positions(poses), cfg):
        pick_p = rng.choice(pos, size=cfg.n_pos, replace=False)
        pick_n = rng.choice(neg, size=cfg.n_neg, replace=False)
        batches.append(TripletBatch(descriptors[qi], descriptors[pick_p],
                                    descriptors[pick_n]))
    return batches


def _deltas(batch: TripletBatch, emb: EmbeddingMap):
    zq = emb.embed(batch.query)
    dp = zq - emb.embed(batch.positives)     # (n_pos, e)
    dn = zq - emb.embed(batch.negatives)     # (n_neg, e)
    return (dp * dp).sum(axis=1), (dn * dn).sum(axis=1)


def triplet_loss(batch: TripletBatch, emb: EmbeddingMap,
                 margin: float = DEFAULT_MARGIN) -> float:
    """Lazy triplet loss: hardest negative against the closest positive."""
    d_pos, d_neg = _deltas(batch, emb)
    hinge = margin + d_pos.min() - d_neg
    return float(max(hinge.max(), 0.0))


def triplet_grad(batch: TripletBatch, emb: EmbeddingMap,
                 margin: float = DEFAULT_MARGIN) -> np.ndarray:
    """Exact subgradient of :func:`triplet_loss` with respect to W.

    Only the argmin positive and argmax negative participate (ties go to the
    lowest index, matching argmin/argmax); when the hinge is inactive the
    gradient is zero.
    """
    d_pos, d_neg = _deltas(batch, emb)
    i = int(d_pos.argmin())
    hinge = margin + d_pos[i] - d_neg
    j = int(hinge.argmax())
    if hinge[j] <= 0.0:
        return np.zeros_like(emb.W)
    # d/dW ||W a||^2 = 2 (W a) a^T applied to a = q - p_i and b = q - n_j.
    a = batch.query - batch.positives[i]
    b = batch.query - batch.negatives[j]
    return 2.0 * (np.outer(emb.W @ a, a) - np.outer(emb.W @ b, b))


def mine_hard_negatives(query: np.ndarray, candidates: np.ndarray,
                        emb: EmbeddingMap, n_neg: int) -> np.ndarray:
    """Return the ``n_neg`` candidates closest to the query in embedding space.

    Fewer candidates than requested returns them all; ties keep the lower
    index first (stable sort).
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if len(candidates) == 0:
        raise ValueError("need at least one negative candidate")
    diff = emb.embed(candidates) - emb.embed(query)
    order = np.argsort((diff * diff).sum(axis=1), kind="stable")
    return candidates[order[:n_neg]]


def train_metric(descriptors, poses, cfg: TripletConfig = TripletConfig(),
                 epochs: int = 20, seed: int = 0,
                 output_dim: int | None = None,
                 learning_rate: float = DEFAULT_LEARNING_RATE):
    """Fit an EmbeddingMap by SGD over per-query triplet batches.

    Positives and (before ``cfg.hard_mining_start_epoch``) negatives are
    re-sampled every epoch; from that epoch on, negatives are the hardest
    geometric negatives under the current W.  Returns ``(EmbeddingMap,
    per-epoch mean loss trace)``.
    """
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if descriptors.ndim != 2:
        raise ValueError("descriptors must be a (N, D) matrix")
    candidates = _candidate_sets(_positions(poses), cfg)
    if not candidates:
        raise ValueError("no query has enough positives and negatives; "
                         "check d_pos/d_neg against the trajectory")

    emb = EmbeddingMap.identity(descriptors.shape[1], output_dim,
                                learning_rate=learning_rate)
    rng = np.random.default_rng(seed)
    trace = []
    for epoch in range(epochs):
        mining = epoch >= cfg.hard_mining_start_epoch
        losses = []
        for bi in rng.permutation(len(candidates)):
            qi, pos, neg = candidates[bi]
            pick_p = rng.choice(pos, size=cfg.n_pos, replace=False)
            if mining:
                negatives = mine_hard_negatives(descriptors[qi],
                                                descriptors[neg], emb,
                                                cfg.n_neg)
            else:
                negatives = descriptors[rng.choice(neg, size=cfg.n_neg,
                                                   replace=False)]
            batch = TripletBatch(descriptors[qi], descriptors[pick_p],
                                 negatives)
            losses.append(triplet_loss(batch, emb, cfg.margin_m))
            emb.W = emb.W - emb.learning_rate * triplet_grad(batch, emb,
                                                             cfg.margin_m)
        emb.epoch = epoch + 1
        trace.append(float(np.mean(losses)))
    return emb, np.asarray(trace)


def save_embedding(emb: EmbeddingMap, path: str | os.PathLike) -> None:
    """Write W: magic, version u16, e u32, input-dim u32, e*D f64 little-endian."""
    header = struct.pack("<4sHII", EMBEDDING_MAGIC, EMBEDDING_VERSION,
                         emb.output_dim, emb.input_dim)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(emb.W.astype("<f8").tobytes())


def load_embedding(path: str | os.PathLike) -> EmbeddingMap:
    """Read an EmbeddingMap written by :func:`save_embedding`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    head = struct.calcsize("<4sHII")
    if len(raw) < head:
        raise FormatError(f"{path}: truncated embedding header")
    magic, version, e, d = struct.unpack_from("<4sHII", raw)
    if magic != EMBEDDING_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != EMBEDDING_VERSION:
        raise FormatError(f"{path}: unsupported embedding version {version}")
    if len(raw) != head + 8 * e * d:
        raise FormatError(f"{path}: expected {head + 8 * e * d} bytes, got {len(raw)}")
    W = np.frombuffer(raw, dtype="<f8", offset=head).reshape(e, d).copy()
    return EmbeddingMap(W)
