"""Procedural scenes for exercising the full pipeline without real sensors.

A "town" is a set of axis-aligned boxes and thin walls whose surfaces are
sampled into a map-frame point cloud.  A loop trajectory drives a virtual
vehicle around it; each frame sees the world either as a full point cloud
(map branch) or as a pinhole depth render of the frontal cone (query
branch).  Everything is seeded and reproducible.
"""

from __future__ import annotations

import numpy as np

from .geometry import CAMERA_FROM_VEHICLE, CameraIntrinsics, DepthMap, Pose


def box_cloud(center, size, n_points: int, rng: np.random.Generator) -> np.ndarray:
    """Sample points uniformly over the four vertical faces of a box."""
    cx, cy, cz = center
    sx, sy, sz = size
    # face areas decide how many samples each side gets
    areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz], dtype=np.float64)
    counts = rng.multinomial(n_points, areas / areas.sum())
    points = []
    for face, count in enumerate(counts):
        a = rng.uniform(-0.5, 0.5, size=count)
        b = rng.uniform(-0.5, 0.5, size=count)
        if face == 0:    # x = cx - sx/2
            pts = np.column_stack([np.full(count, -0.5) * sx, a * sy, b * sz])
        elif face == 1:  # x = cx + sx/2
            pts = np.column_stack([np.full(count, 0.5) * sx, a * sy, b * sz])
        elif face == 2:  # y = cy - sy/2
            pts = np.column_stack([a * sx, np.full(count, -0.5) * sy, b * sz])
        else:            # y = cy + sy/2
            pts = np.column_stack([a * sx, np.full(count, 0.5) * sy, b * sz])
        points.append(pts + np.asarray([cx, cy, cz], dtype=np.float64))
    return np.concatenate(points, axis=0)


def wall_cloud(start, end, height: float, n_points: int,
               rng: np.random.Generator) -> np.ndarray:
    """Sample points on a vertical rectangle from start to end (ground z=0)."""
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    t = rng.uniform(0.0, 1.0, size=n_points)
    z = rng.uniform(0.0, height, size=n_points)
    xy = start[None, :] + t[:, None] * (end - start)[None, :]
    return np.column_stack([xy[:, 0], xy[:, 1], z])


def town_cloud(rng: np.random.Generator, n_boxes: int = 60,
               extent: float = 80.0, points_per_box: int = 400,
               clear_ring: tuple[float, float] | None = None) -> np.ndarray:
    """A field of boxes with an enclosing square wall, as one map-frame cloud.

    ``clear_ring = (radius, margin)`` keeps an annular road around the origin
    free of boxes so a loop trajectory does not drive through geometry.
    """
    parts = []
    placed = 0
    while placed < n_boxes:
        center = rng.uniform(-extent, extent, size=2)
        if clear_ring is not None:
            radius, margin = clear_ring
            if abs(np.hypot(center[0], center[1]) - radius) < margin:
                continue
        size = rng.uniform(2.0, 8.0, size=2)
        height = rng.uniform(3.0, 9.0)
        parts.append(box_cloud((center[0], center[1], height / 2.0),
                               (size[0], size[1], height),
                               points_per_box, rng))
        placed += 1
    e = extent + 15.0
    corners = [(-e, -e), (e, -e), (e, e), (-e, e), (-e, -e)]
    for a, b in zip(corners, corners[1:]):
        parts.append(wall_cloud(a, b, 6.0, 4 * points_per_box, rng))
    return np.concatenate(parts, axis=0)


def sectored_town(rng: np.random.Generator, ring: float = 60.0,
                  clearance: float = 14.0) -> np.ndarray:
    """A town whose skyline changes with bearing, for place recognition.

    Ten angular sectors each get their own building character (count, box
    footprint range, height range), and twelve tall landmark towers sit at
    irregular bearings, so every stretch of a loop road sees a distinct
    skyline.  An annulus of half-width ``clearance`` around radius ``ring``
    is kept free of geometry so a trajectory on that ring never drives
    through a wall.  A square boundary wall closes the horizon.
    """
    parts = []

    def radius_ok(rad: float) -> bool:
        return abs(rad - ring) >= clearance

    bounds = np.sort(rng.uniform(0.0, 2.0 * np.pi, 10))
    for s in range(10):
        lo = bounds[s]
        hi = bounds[s + 1] if s < 9 else bounds[0] + 2.0 * np.pi
        density = rng.integers(12, 40)
        size_lo, size_hi = sorted(rng.uniform(1.5, 14.0, 2))
        h_lo, h_hi = sorted(rng.uniform(2.0, 10.0, 2))
        placed = 0
        while placed < density:
            ang = rng.uniform(lo, hi)
            rad = rng.uniform(15.0, 100.0)
            if not radius_ok(rad):
                continue
            center = (rad * np.cos(ang), rad * np.sin(ang))
            size = rng.uniform(size_lo, max(size_hi, size_lo + 0.5), 2)
            height = rng.uniform(h_lo, max(h_hi, h_lo + 0.5))
            parts.append(box_cloud((center[0], center[1], height / 2.0),
                                   (size[0], size[1], height), 600, rng))
            placed += 1

    for ang in np.sort(rng.uniform(0.0, 2.0 * np.pi, 12)):
        rad = 0.0
        while not radius_ok(rad):
            rad = rng.uniform(25.0, 95.0)
        center = (rad * np.cos(ang), rad * np.sin(ang))
        fx, fy = rng.uniform(5.0, 16.0, 2)
        height = rng.uniform(12.0, 25.0)
        parts.append(box_cloud((center[0], center[1], height / 2.0),
                               (fx, fy, height), 1200, rng))

    e = 100.0
    corners = [(-e, -e), (e, -e), (e, e), (-e, e), (-e, -e)]
    for a, b in zip(corners, corners[1:]):
        parts.append(wall_cloud(a, b, 6.0, 900, rng))
    return np.concatenate(parts, axis=0)


def aliased_sites(rng: np.random.Generator, n_per_site: int = 12,
                  dim: int = 32, site_gap: float = 130.0,
                  signature_amp: float = 1.0, site_amp: float = 0.15,
                  noise_amp: float = 0.12):
    """Two far-apart places whose raw descriptors are nearly identical.

    Both sites share one dominant signature (dims 0-7), so raw nearest
    neighbors are decided by per-frame noise (dims 10+) and confuse the
    sites about half the time; the true site identity hides in two
    low-amplitude dims (8-9) that a learned linear map can amplify.
    Returns ``(db_descriptors, db_poses, query_descriptors, query_poses)``
    with ``n_per_site`` frames per site in each set, descriptors unit-norm.
    """
    signature = rng.normal(size=8)
    signature *= signature_amp / np.linalg.norm(signature)

    def sample(site: int, n: int) -> np.ndarray:
        out = np.zeros((n, dim))
        out[:, :8] = signature
        out[:, 8 + site] = site_amp
        out[:, 10:] = rng.normal(scale=noise_amp, size=(n, dim - 10))
        out /= np.linalg.norm(out, axis=1, keepdims=True)
        return out

    def blob(cx: float, n: int) -> list[Pose]:
        xy = rng.uniform(-2.0, 2.0, size=(n, 2))
        return [Pose(np.array([cx + x, y, 0.0]), np.eye(3)) for x, y in xy]

    db_desc = np.vstack([sample(0, n_per_site), sample(1, n_per_site)])
    query_desc = np.vstack([sample(0, n_per_site), sample(1, n_per_site)])
    db_poses = blob(0.0, n_per_site) + blob(site_gap, n_per_site)
    query_poses = blob(0.0, n_per_site) + blob(site_gap, n_per_site)
    return db_desc, db_poses, query_desc, query_poses


def loop_trajectory(n_frames: int, radius: float = 60.0,
                    center=(0.0, 0.0), z: float = 0.0) -> list[Pose]:
    """Poses around a closed circle, heading tangent to the path."""
    poses = []
    for theta in np.linspace(0.0, 2.0 * np.pi, n_frames, endpoint=False):
        position = np.array([center[0] + radius * np.cos(theta),
                             center[1] + radius * np.sin(theta), z])
        c, s = np.cos(theta), np.sin(theta)
        # columns: vehicle right / forward / up expressed in the map frame
        rotation = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        poses.append(Pose(position, rotation))
    return poses


def world_to_vehicle(cloud: np.ndarray, pose: Pose) -> np.ndarray:
    """Map-frame points expressed in the vehicle frame of ``pose``."""
    cloud = np.asarray(cloud, dtype=np.float64)
    return (cloud - pose.position) @ pose.rotation


def add_point_noise(cloud: np.ndarray, sigma: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Additive isotropic Gaussian jitter on every point."""
    return cloud + rng.normal(scale=sigma, size=cloud.shape)


def _project(cloud_vehicle: np.ndarray, intrinsics: CameraIntrinsics):
    cam = np.asarray(cloud_vehicle, dtype=np.float64) @ CAMERA_FROM_VEHICLE.T
    depth = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intrinsics.f_u * cam[:, 0] / depth + intrinsics.c_u
        v = intrinsics.f_v * cam[:, 1] / depth + intrinsics.c_v
    return u, v, depth


def visible_mask(cloud_vehicle: np.ndarray, intrinsics: CameraIntrinsics,
                 width: int, height: int, max_depth: float) -> np.ndarray:
    """Points inside the camera frustum (ignoring occlusion)."""
    u, v, depth = _project(cloud_vehicle, intrinsics)
    cols = np.floor(u + 0.5)
    rows = np.floor(v + 0.5)
    return ((depth > 0.0) & (depth <= max_depth)
            & (cols >= 0) & (cols < width) & (rows >= 0) & (rows < height))


def _zbuffer(cloud_vehicle: np.ndarray, intrinsics: CameraIntrinsics,
             width: int, height: int, max_depth: float):
    u, v, depth = _project(cloud_vehicle, intrinsics)
    keep = visible_mask(cloud_vehicle, intrinsics, width, height, max_depth)
    cols = np.floor(u + 0.5).astype(np.int64)
    rows = np.floor(v + 0.5).astype(np.int64)
    values = np.full((height, width), np.inf)
    np.minimum.at(values, (rows[keep], cols[keep]), depth[keep])
    return values, keep, rows, cols, depth


def zbuffer_mask(cloud_vehicle: np.ndarray, intrinsics: CameraIntrinsics,
                 width: int, height: int, max_depth: float) -> np.ndarray:
    """Points the camera actually sees: frustum minus occluded ones."""
    values, keep, rows, cols, depth = _zbuffer(cloud_vehicle, intrinsics,
                                               width, height, max_depth)
    seen = keep.copy()
    seen[keep] = depth[keep] <= values[rows[keep], cols[keep]]
    return seen


def render_depth(cloud_vehicle: np.ndarray, intrinsics: CameraIntrinsics,
                 width: int, height: int, max_depth: float) -> DepthMap:
    """Z-buffer render of a vehicle-frame cloud into a depth image."""
    values, _, _, _, _ = _zbuffer(cloud_vehicle, intrinsics,
                                  width, height, max_depth)
    valid = np.isfinite(values)
    values[~valid] = 1.0   # placeholder; masked out below
    return DepthMap(values, valid)
