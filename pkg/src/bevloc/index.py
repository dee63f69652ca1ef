"""Frame descriptor database with exact nearest-neighbor retrieval.

Brute force is the point here: the database is the reference answer that any
future accelerated search would have to reproduce, so queries do a full
linear scan and break distance ties by lower frame id.  Records carry the
frame pose so evaluation can check retrieved frames against ground truth.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .geometry import Pose

DATABASE_MAGIC = b"I2PD"
DATABASE_VERSION = 1

_HEADER = "<4sHQI"
_RECORD_FIXED = "<Q12d"


@dataclass(frozen=True)
class FrameRecord:
    """One mapped frame: id, ground-truth pose, global descriptor."""

    frame_id: int
    pose: Pose
    descriptor: np.ndarray

    def __post_init__(self):
        if self.frame_id < 0:
            raise ValueError("frame_id must be non-negative")
        d = np.asarray(self.descriptor, dtype=np.float64)
        if d.ndim != 1 or len(d) == 0:
            raise ValueError("descriptor must be a non-empty vector")
        object.__setattr__(self, "frame_id", int(self.frame_id))
        object.__setattr__(self, "descriptor", d)


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked (frame_id, distance) pairs, nearest first."""

    frame_ids: np.ndarray   # (N,) int64
    distances: np.ndarray   # (N,) float64

    def __post_init__(self):
        ids = np.asarray(self.frame_ids, dtype=np.int64)
        dist = np.asarray(self.distances, dtype=np.float64)
        if ids.shape != dist.shape or ids.ndim != 1:
            raise ValueError("ids and distances must be aligned vectors")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("duplicate frame ids in a result")
        if len(dist) > 1 and (np.diff(dist) < 0).any():
            raise ValueError("distances must be non-decreasing")
        object.__setattr__(self, "frame_ids", ids)
        object.__setattr__(self, "distances", dist)

    def __len__(self) -> int:
        return len(self.frame_ids)

    def __iter__(self):
        return iter(zip(self.frame_ids.tolist(), self.distances.tolist()))


class FrameDatabase:
    """In-memory collection of FrameRecords; first insert fixes the dimension."""

    def __init__(self):
        self._ids: list[int] = []
        self._poses: list[Pose] = []
        self._rows: list[np.ndarray] = []
        self._id_set: set[int] = set()

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def dim(self) -> int | None:
        return len(self._rows[0]) if self._rows else None

    @property
    def frame_ids(self) -> np.ndarray:
        return np.asarray(self._ids, dtype=np.int64)

    @property
    def descriptors(self) -> np.ndarray:
        if not self._rows:
            return np.zeros((0, 0))
        return np.stack(self._rows)

    @property
    def poses(self) -> list[Pose]:
        return list(self._poses)

    def positions(self) -> np.ndarray:
        """Stacked (N, 3) pose positions in insertion order."""
        return np.asarray([p.position for p in self._poses], dtype=np.float64)

    def insert(self, record: FrameRecord) -> None:
        if record.frame_id in self._id_set:
            raise ValueError(f"frame_id {record.frame_id} already in database")
        if self._rows and len(record.descriptor) != len(self._rows[0]):
            raise ValueError(
                f"descriptor dim {len(record.descriptor)} does not match "
                f"database dim {len(self._rows[0])}")
        self._ids.append(record.frame_id)
        self._poses.append(record.pose)
        self._rows.append(record.descriptor)
        self._id_set.add(record.frame_id)

    def record(self, i: int) -> FrameRecord:
        return FrameRecord(self._ids[i], self._poses[i], self._rows[i])

    def query_knn(self, descriptor: np.ndarray, n: int) -> RetrievalResult:
        """Exact Euclidean top-n; ties broken by lower frame id."""
        if not self._rows:
            raise RuntimeError("cannot query an empty database")
        if n < 1:
            raise ValueError("n must be at least 1")
        q = np.asarray(descriptor, dtype=np.float64)
        if q.shape != (len(self._rows[0]),):
            raise ValueError(f"query dim {q.shape} does not match database")
        diff = self.descriptors - q
        dist = np.sqrt((diff * diff).sum(axis=1))
        ids = self.frame_ids
        order = np.lexsort((ids, dist))[:min(n, len(ids))]
        return RetrievalResult(ids[order], dist[order])

    def save(self, path: str | os.PathLike) -> None:
        """Write all records; see :func:`load` for the layout."""
        dim = self.dim or 0
        with open(path, "wb") as fh:
            fh.write(struct.pack(_HEADER, DATABASE_MAGIC, DATABASE_VERSION,
                                 len(self), dim))
            for fid, pose, row in zip(self._ids, self._poses, self._rows):
                matrix = np.hstack([pose.rotation, pose.position[:, None]])
                fh.write(struct.pack(_RECORD_FIXED, fid, *matrix.ravel()))
                fh.write(row.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "FrameDatabase":
        """Read a database: magic, version u16, count u64, dim u32, then per
        record frame_id u64 + 3x4 pose (row-major f64) + descriptor f64."""
        with open(path, "rb") as fh:
            raw = fh.read()
        head = struct.calcsize(_HEADER)
        if len(raw) < head:
            raise FormatError(f"{path}: truncated database header")
        magic, version, count, dim = struct.unpack_from(_HEADER, raw)
        if magic != DATABASE_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != DATABASE_VERSION:
            raise FormatError(f"{path}: unsupported database version {version}")
        if count > 0 and dim == 0:
            raise FormatError(f"{path}: non-empty database with zero dimension")
        fixed = struct.calcsize(_RECORD_FIXED)
        expected = head + count * (fixed + 8 * dim)
        if len(raw) != expected:
            raise FormatError(f"{path}: expected {expected} bytes, got {len(raw)}")
        db = cls()
        offset = head
        for _ in range(count):
            values = struct.unpack_from(_RECORD_FIXED, raw, offset)
            offset += fixed
            matrix = np.asarray(values[1:], dtype=np.float64).reshape(3, 4)
            descriptor = np.frombuffer(raw, dtype="<f8", count=dim,
                                       offset=offset).copy()
            offset += 8 * dim
            db.insert(FrameRecord(values[0], Pose(matrix[:, 3], matrix[:, :3]),
                                  descriptor))
        return db
