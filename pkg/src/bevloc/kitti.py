"""Readers for odometry-style dataset artifacts.

Format reference
----------------
* LiDAR scan (``.bin``): little-endian binary, 16 bytes per point holding
  four float32 values ``(x, y, z, intensity)``.  The intensity channel is
  read and discarded; only coordinates survive.
* Poses (``poses.txt``): one frame per line, 12 whitespace-separated numbers
  forming a row-major 3x4 matrix ``[R | t]`` (vehicle-to-map).
* Calibration (``calib.txt``): lines of the form ``P0: <12 numbers>`` holding
  row-major 3x4 projection matrices.  ``f_u = P[0,0]``, ``c_u = P[0,2]``,
  ``f_v = P[1,1]``, ``c_v = P[1,2]``; the stereo baseline comes from the
  right camera as ``-P_right[0,3] / P_right[0,0]``.
* Depth / disparity maps: 16-bit single-channel PNG; a raw value of 0 marks
  an invalid pixel, any other value is multiplied by a metric scale factor.

All readers are pure functions of the file bytes.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError
from .geometry import CameraIntrinsics, DepthMap, DisparityMap, Pose, StereoRig

LIDAR_RECORD_BYTES = 16

# Raw PNG units per meter (depth) or per pixel (disparity): the common
# KITTI-style encoding stores value*256.
DEFAULT_PNG_SCALE = 1.0 / 256.0


def read_lidar_scan(path: str | os.PathLike) -> np.ndarray:
    """Read a binary LiDAR scan into an ``(N, 3)`` float64 point cloud."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) % LIDAR_RECORD_BYTES != 0:
        raise FormatError(
            f"{path}: truncated scan, {len(raw)} bytes is not a multiple of {LIDAR_RECORD_BYTES}"
        )
    records = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    return records[:, :3].astype(np.float64)


def write_lidar_scan(path: str | os.PathLike, cloud: np.ndarray,
                     intensity: np.ndarray | None = None) -> None:
    """Write a point cloud in the 16-byte record format (round-trip helper)."""
    cloud = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    records = np.zeros((len(cloud), 4), dtype="<f4")
    records[:, :3] = cloud
    if intensity is not None:
        records[:, 3] = intensity
    with open(path, "wb") as fh:
        fh.write(records.tobytes())


def read_poses(path: str | os.PathLike, tol: float = 1e-9) -> list[Pose]:
    """Read a poses file: 12 numbers per non-empty line, row-major 3x4.

    ``tol`` is the orthonormality tolerance applied to each rotation block;
    loosen it for files whose rotations were rounded during export.
    """
    poses = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 12:
                raise FormatError(f"{path}:{lineno}: expected 12 numbers, got {len(fields)}")
            try:
                m = np.array([float(x) for x in fields], dtype=np.float64).reshape(3, 4)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            try:
                poses.append(Pose(m[:, 3], m[:, :3], tol=tol))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return poses


def read_calib(path: str | os.PathLike) -> dict[str, np.ndarray]:
    """Read ``name: <12 numbers>`` calibration lines into 3x4 matrices."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            name, sep, rest = line.partition(":")
            fields = rest.split()
            if not sep or len(fields) != 12:
                raise FormatError(f"{path}:{lineno}: expected 'name: <12 numbers>'")
            try:
                out[name.strip()] = np.array(
                    [float(x) for x in fields], dtype=np.float64
                ).reshape(3, 4)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return out


def intrinsics_from_projection(P: np.ndarray) -> CameraIntrinsics:
    """Extract pinhole intrinsics from a 3x4 projection matrix."""
    P = np.asarray(P, dtype=np.float64)
    return CameraIntrinsics(f_u=P[0, 0], f_v=P[1, 1], c_u=P[0, 2], c_v=P[1, 2])


def stereo_rig_from_projections(P_left: np.ndarray, P_right: np.ndarray) -> StereoRig:
    """Build a stereo rig from rectified left/right projection matrices."""
    P_right = np.asarray(P_right, dtype=np.float64)
    baseline = -P_right[0, 3] / P_right[0, 0]
    return StereoRig(intrinsics_from_projection(P_left), baseline)


def _read_png16(path: str | os.PathLike) -> np.ndarray:
    try:
        img = Image.open(path)
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a decodable image") from exc
    with img:
        if img.mode not in ("I;16", "I;16B", "I"):
            raise FormatError(
                f"{path}: expected a 16-bit single-channel image, got mode {img.mode!r}"
            )
        raw = np.asarray(img, dtype=np.int64)
    if raw.ndim != 2:
        raise FormatError(f"{path}: expected a single channel, got shape {raw.shape}")
    if raw.min() < 0 or raw.max() > 0xFFFF:
        raise FormatError(f"{path}: values exceed the 16-bit range")
    return raw


def read_depth_png(path: str | os.PathLike, scale: float = DEFAULT_PNG_SCALE) -> DepthMap:
    """Read a 16-bit depth PNG; depth = raw * scale, raw 0 means invalid."""
    raw = _read_png16(path)
    valid = raw > 0
    return DepthMap(raw * float(scale), valid)


def read_disparity_png(path: str | os.PathLike, scale: float = DEFAULT_PNG_SCALE) -> DisparityMap:
    """Read a 16-bit disparity PNG; disparity = raw * scale, raw 0 means invalid."""
    raw = _read_png16(path)
    valid = raw > 0
    return DisparityMap(raw * float(scale), valid)


def write_png16(path: str | os.PathLike, raw: np.ndarray) -> None:
    """Write a 16-bit single-channel PNG from integer raw values."""
    raw = np.asarray(raw)
    if raw.ndim != 2:
        raise ValueError("raw image must be 2-D")
    if raw.min() < 0 or raw.max() > 0xFFFF:
        raise ValueError("raw values must fit in 16 bits")
    Image.fromarray(raw.astype(np.uint16)).save(path, format="PNG")


def encode_depth_png(depth: DepthMap, scale: float = DEFAULT_PNG_SCALE) -> np.ndarray:
    """Quantize a depth map back to raw 16-bit values (0 where invalid)."""
    raw = np.floor(depth.values / scale + 0.5).astype(np.int64)
    raw[~depth.valid] = 0
    raw = np.clip(raw, 0, 0xFFFF)
    # Quantization may round a tiny depth to 0; that pixel becomes invalid.
    return raw
