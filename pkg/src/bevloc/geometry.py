"""Camera geometry: calibration types, disparity-to-depth, and back-projection.

Coordinate conventions
----------------------
* Pixel coordinates: ``u`` is the column index, ``v`` the row index.
* Camera frame: x right, y down, z forward (optical axis).
* Vehicle frame: x right, y forward, z up; the x-y plane is the ground plane.

A point cloud is a plain ``(N, 3)`` float64 array in the vehicle frame.
Point order carries no meaning; every consumer treats clouds as sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHONORMAL_TOL = 1e-9


def _check_rotation(R: np.ndarray, tol: float, require_det: bool = True) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    if not np.all(np.isfinite(R)):
        raise ValueError("rotation contains non-finite entries")
    err = np.max(np.abs(R @ R.T - np.eye(3)))
    if err > tol:
        raise ValueError(f"rotation not orthonormal: max |R R^T - I| = {err:.3e} > {tol:.1e}")
    if require_det and abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("rotation must have determinant 1 (proper rotation)")
    return R


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels: focal lengths and principal point."""

    f_u: float
    f_v: float
    c_u: float
    c_v: float

    def __post_init__(self):
        if not (self.f_u > 0 and self.f_v > 0):
            raise ValueError("focal lengths must be positive")
        if not (np.isfinite(self.c_u) and np.isfinite(self.c_v)):
            raise ValueError("principal point must be finite")


@dataclass(frozen=True)
class StereoRig:
    """A rectified stereo pair: shared intrinsics plus horizontal baseline in meters."""

    intrinsics: CameraIntrinsics
    baseline_b: float

    def __post_init__(self):
        if not self.baseline_b > 0:
            raise ValueError("stereo baseline must be positive")


@dataclass(frozen=True)
class Extrinsics:
    """Vehicle-to-camera transform: ``p_cam = R @ p_vehicle + t``."""

    rotation_R: np.ndarray
    translation_t: np.ndarray
    tol: float = ORTHONORMAL_TOL

    def __post_init__(self):
        R = _check_rotation(self.rotation_R, self.tol)
        t = np.asarray(self.translation_t, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation contains non-finite entries")
        object.__setattr__(self, "rotation_R", R)
        object.__setattr__(self, "translation_t", t)

    @staticmethod
    def identity() -> "Extrinsics":
        return Extrinsics(np.eye(3), np.zeros(3))


# Axis permutation from the vehicle frame (x right, y forward, z up) to the
# camera frame (x right, y down, z forward).
CAMERA_FROM_VEHICLE = np.array(
    [[1.0, 0.0, 0.0],
     [0.0, 0.0, -1.0],
     [0.0, 1.0, 0.0]]
)


def camera_extrinsics(translation=(0.0, 0.0, 0.0)) -> Extrinsics:
    """Extrinsics for a forward-looking camera at the given vehicle-frame offset."""
    t = CAMERA_FROM_VEHICLE @ np.asarray(translation, dtype=np.float64)
    return Extrinsics(CAMERA_FROM_VEHICLE, -t)


@dataclass(frozen=True)
class Pose:
    """Frame pose on the map: position in meters plus vehicle-to-map rotation."""

    position: np.ndarray
    rotation: np.ndarray
    tol: float = ORTHONORMAL_TOL

    def __post_init__(self):
        R = _check_rotation(self.rotation, self.tol, require_det=False)
        p = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(p)):
            raise ValueError("position contains non-finite entries")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "position", p)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.eye(3))


def _as_raster(values, valid) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-D raster, got shape {values.shape}")
    if valid is None:
        valid = np.ones(values.shape, dtype=bool)
    else:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != values.shape:
            raise ValueError("validity mask shape must match values")
    return values, valid


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth in meters with an explicit validity mask.

    Every valid value is positive and finite; invalid pixels carry no meaning.
    """

    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        values, valid = _as_raster(self.values, self.valid)
        v = values[valid]
        if v.size and not (np.all(np.isfinite(v)) and np.all(v > 0)):
            raise ValueError("valid depth values must be finite and > 0")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DisparityMap:
    """Per-pixel disparity in pixels with an explicit validity mask."""

    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        values, valid = _as_raster(self.values, self.valid)
        v = values[valid]
        if v.size and not (np.all(np.isfinite(v)) and np.all(v > 0)):
            raise ValueError("valid disparity values must be finite and > 0")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def disparity_to_depth(disp: DisparityMap, rig: StereoRig) -> DepthMap:
    """Convert a disparity map to a depth map: depth = f_u * baseline / disparity.

    Invalid or non-positive disparities stay invalid; output dimensions equal
    input dimensions.
    """
    if disp.values.size == 0:
        raise ValueError("disparity map has zero size")
    ok = disp.valid & (disp.values > 0)
    depth = np.zeros_like(disp.values)
    np.divide(rig.intrinsics.f_u * rig.baseline_b, disp.values, out=depth, where=ok)
    ok &= np.isfinite(depth) & (depth > 0)
    depth[~ok] = 0.0
    return DepthMap(depth, ok)


def backproject(
    depth: DepthMap,
    intr: CameraIntrinsics,
    extr: Extrinsics,
    max_depth: float | None = None,
) -> np.ndarray:
    """Back-project valid depth pixels to a vehicle-frame point cloud.

    For a pixel (u, v) with depth d the camera-frame point is
    ``(d*(u - c_u)/f_u, d*(v - c_v)/f_v, d)``; the vehicle-frame point is
    ``R^-1 (p_cam - t)``.  Pixels deeper than ``max_depth`` are dropped.

    Returns an ``(N, 3)`` float64 array with one point per retained pixel.
    """
    mask = depth.valid
    if max_depth is not None:
        mask = mask & (depth.values <= max_depth)
    vs, us = np.nonzero(mask)
    d = depth.values[vs, us]
    p_cam = np.empty((d.size, 3), dtype=np.float64)
    p_cam[:, 0] = d * (us - intr.c_u) / intr.f_u
    p_cam[:, 1] = d * (vs - intr.c_v) / intr.f_v
    p_cam[:, 2] = d
    # R is orthonormal by construction, so R^-1 == R^T.
    return (p_cam - extr.translation_t) @ extr.rotation_R
