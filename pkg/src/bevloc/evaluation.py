"""Recall metrics, threshold sweeps, and dataset split bookkeeping.

A retrieved frame is a true positive when its ground-truth position lies
within ``t`` meters (3-D Euclidean) of the query's position.  recall@N is the
fraction of queries whose top-N contains at least one true positive;
recall@1% uses N = ceil(percent * database size), floored at one candidate.
Split definitions are inclusive frame ranges per sequence.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

DEFAULT_TP_THRESHOLD = 10.0
DEFAULT_PERCENT = 0.01
DEFAULT_SWEEP = (5.0, 10.0, 20.0, 30.0, 40.0, 50.0)

METRICS_CSV_HEADER = ("metric", "sequence", "value")
SWEEP_CSV_HEADER = ("threshold_m", "recall_at_1")


@dataclass(frozen=True)
class EvalConfig:
    """Thresholds and candidate counts for retrieval scoring."""

    tp_threshold_t: float = DEFAULT_TP_THRESHOLD
    top_n: int = 1
    percent: float = DEFAULT_PERCENT
    sweep: tuple[float, ...] = DEFAULT_SWEEP

    def __post_init__(self):
        if not self.tp_threshold_t > 0:
            raise ValueError("tp_threshold_t must be positive")
        if not (0.0 < self.percent <= 1.0):
            raise ValueError("percent must be in (0, 1]")
        if self.top_n < 1:
            raise ValueError("top_n must be at least 1")
        object.__setattr__(self, "sweep", tuple(float(t) for t in self.sweep))


@dataclass(frozen=True)
class SplitSpec:
    """Named frame ranges per role; endpoints are inclusive."""

    train: tuple = ()
    val: tuple = ()
    test: tuple = ()

    def __post_init__(self):
        for role in ("train", "val", "test"):
            ranges = tuple((str(seq), int(lo), int(hi))
                           for seq, lo, hi in getattr(self, role))
            seen: dict[str, list] = {}
            for seq, lo, hi in ranges:
                if lo < 0 or hi < lo:
                    raise ValueError(f"{role}: bad frame range {lo}-{hi}")
                for plo, phi in seen.get(seq, []):
                    if lo <= phi and plo <= hi:
                        raise ValueError(f"{role}: overlapping ranges on {seq}")
                seen.setdefault(seq, []).append((lo, hi))
            object.__setattr__(self, role, ranges)

    def ranges(self, role: str) -> tuple:
        if role not in ("train", "val", "test"):
            raise ValueError(f"unknown split role {role!r}")
        return getattr(self, role)


# Partition used throughout: train and val carved out of sequence 00,
# evaluation on 02 / 05 / 06 / 08 in full.
DEFAULT_SPLIT = SplitSpec(
    train=(("00", 0, 3000),),
    val=(("00", 3200, 4540),),
    test=(("02", 0, 4660), ("05", 0, 2760), ("06", 0, 1100), ("08", 0, 4070)),
)


def _as_positions(poses) -> np.ndarray:
    return np.asarray([getattr(p, "position", p) for p in poses],
                      dtype=np.float64)


def _position_lookup(db_poses):
    """Accept a sequence (frame id = index) or a mapping keyed by frame id."""
    if hasattr(db_poses, "keys"):
        return {int(k): np.asarray(getattr(v, "position", v), dtype=np.float64)
                for k, v in db_poses.items()}
    arr = _as_positions(db_poses)
    return {i: arr[i] for i in range(len(arr))}


def percent_count(percent: float, db_size: int) -> int:
    """Candidate count for recall@percent: ceil(percent * size), at least 1.

    Products that land within 1e-9 of an integer are treated as exact so
    binary rounding (e.g. 0.01 * 300) cannot inflate the ceiling.
    """
    raw = percent * db_size
    nearest = round(raw)
    n = nearest if abs(raw - nearest) <= 1e-9 * max(1.0, abs(raw)) \
        else math.ceil(raw)
    return max(1, int(n))


def recall_at_n(results, query_poses, db_poses, t: float, n: int) -> float:
    """Fraction of queries whose top-n retrievals include a frame within t meters."""
    if len(results) == 0:
        raise ValueError("empty query set")
    if len(results) != len(query_poses):
        raise ValueError("results and query poses must be aligned")
    lookup = _position_lookup(db_poses)
    qpos = _as_positions(query_poses)
    hits = 0
    for res, q in zip(results, qpos):
        ids = res.frame_ids[:n]
        retrieved = np.asarray([lookup[int(i)] for i in ids])
        if len(retrieved) and (np.linalg.norm(retrieved - q, axis=1) <= t).any():
            hits += 1
    return hits / len(results)


def recall_at_percent(results, query_poses, db_poses, t: float,
                      percent: float = DEFAULT_PERCENT) -> float:
    """recall@N with N tied to the database size by the ceiling rule."""
    db_size = len(db_poses)
    return recall_at_n(results, query_poses, db_poses, t,
                       percent_count(percent, db_size))


def threshold_sweep(results, query_poses, db_poses,
                    thresholds=DEFAULT_SWEEP) -> list[tuple[float, float]]:
    """recall@1 at each threshold; thresholds must be strictly increasing."""
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise ValueError("empty threshold list")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    return [(t, recall_at_n(results, query_poses, db_poses, t, 1))
            for t in thresholds]


def apply_split(frame_counts, split: SplitSpec, role: str) -> dict[str, np.ndarray]:
    """Frame indices per sequence for a role.

    ``frame_counts`` maps sequence name to its frame count; ranges reaching
    past a sequence's end are configuration errors.
    """
    out: dict[str, np.ndarray] = {}
    for seq, lo, hi in split.ranges(role):
        if seq not in frame_counts:
            raise ConfigError(f"split references unknown sequence {seq!r}")
        count = int(frame_counts[seq])
        if hi >= count:
            raise ConfigError(
                f"split range {lo}-{hi} exceeds sequence {seq} ({count} frames)")
        indices = np.arange(lo, hi + 1, dtype=np.int64)
        out[seq] = np.concatenate([out[seq], indices]) if seq in out else indices
    return out


def write_metrics_csv(path: str | os.PathLike, rows) -> None:
    """Write (metric, sequence, value) rows under the standard header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_CSV_HEADER)
        for metric, sequence, value in rows:
            writer.writerow([metric, sequence, f"{value:.6f}"])


def write_sweep_csv(path: str | os.PathLike, pairs) -> None:
    """Write (threshold_m, recall_at_1) rows under the sweep header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_HEADER)
        for t, r in pairs:
            writer.writerow([f"{t:g}", f"{r:.6f}"])
