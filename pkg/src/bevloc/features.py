"""Deterministic local descriptors for BEV images.

Each descriptor summarizes one square patch of the normalized BEV raster:
central-difference gradients are binned into 8 orientation bins weighted by
gradient magnitude, separately over a 2x2 spatial subdivision of the patch,
giving a 32-dimensional vector that is L2-normalized.  Patches with no
gradient energy are dropped.  The extractor is a stand-in for a learned
backbone and sits behind this one function so it can be swapped out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bev import BevImage
from .errors import ConfigError

N_ORIENTATION_BINS = 8
DESCRIPTOR_DIM = 4 * N_ORIENTATION_BINS

DEFAULT_PATCH = 16
DEFAULT_STRIDE = 8


@dataclass(frozen=True)
class LocalFeatureSet:
    """Patch descriptors plus the (row, col) cell position of each patch."""

    positions: np.ndarray   # (N, 2) int64, top-left cell of each patch
    descriptors: np.ndarray  # (N, d) float64, unit rows

    def __post_init__(self):
        if len(self.positions) != len(self.descriptors):
            raise ValueError("positions and descriptors must align")

    def __len__(self) -> int:
        return len(self.descriptors)

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]


def _gradients(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Central differences in the interior, one-sided at the borders; the
    # border rule mirrors itself under 180-degree rotation.
    gy, gx = np.gradient(values)
    return gx, gy


def _orientation_bins(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    theta = np.arctan2(gy, gx)          # (-pi, pi]
    theta = np.where(theta < 0, theta + 2.0 * np.pi, theta)
    bins = np.floor(theta / (2.0 * np.pi / N_ORIENTATION_BINS)).astype(np.int64)
    return np.clip(bins, 0, N_ORIENTATION_BINS - 1)


def extract_local(image: BevImage | np.ndarray, patch: int = DEFAULT_PATCH,
                  stride: int = DEFAULT_STRIDE) -> LocalFeatureSet:
    """Extract gradient-orientation-histogram descriptors on a stride grid."""
    values = np.asarray(getattr(image, "values", image), dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("expected a 2-D intensity raster")
    rows, cols = values.shape
    if patch < 2 or patch > min(rows, cols):
        raise ConfigError(f"patch must be in [2, min(rows, cols)], got {patch}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")

    # Square-root gamma before differentiation: rasters here are normalized
    # point counts, and sqrt stabilizes their variance so a single dense cell
    # cannot drown out every other edge in its patch.
    gx, gy = _gradients(np.sqrt(np.abs(values)))
    mag = np.hypot(gx, gy)
    bins = _orientation_bins(gx, gy)
    # Per-pixel magnitude routed to its orientation channel; subcell
    # histograms are then plain slice sums, so empty regions stay exactly 0.
    channels = np.zeros((rows, cols, N_ORIENTATION_BINS), dtype=np.float64)
    rr, cc = np.nonzero(mag)
    channels[rr, cc, bins[rr, cc]] = mag[rr, cc]

    half = patch // 2
    positions = []
    descriptors = []
    for r0 in range(0, rows - patch + 1, stride):
        for c0 in range(0, cols - patch + 1, stride):
            hist = np.empty((2, 2, N_ORIENTATION_BINS), dtype=np.float64)
            for sr, (ra, rb) in enumerate(((r0, r0 + half), (r0 + half, r0 + patch))):
                for sc, (ca, cb) in enumerate(((c0, c0 + half), (c0 + half, c0 + patch))):
                    hist[sr, sc] = channels[ra:rb, ca:cb].sum(axis=(0, 1))
            vec = hist.ravel()
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                continue
            positions.append((r0, c0))
            descriptors.append(vec / norm)

    if not descriptors:
        return LocalFeatureSet(np.zeros((0, 2), dtype=np.int64),
                               np.zeros((0, DESCRIPTOR_DIM), dtype=np.float64))
    return LocalFeatureSet(np.asarray(positions, dtype=np.int64),
                           np.asarray(descriptors, dtype=np.float64))
