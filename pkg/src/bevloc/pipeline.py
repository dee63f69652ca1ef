"""End-to-end composition: point clouds and depth maps to frame records.

The map branch consumes full 360-degree scans; the query branch consumes
depth (or disparity) images that only ever see the frontal cone.  Both land
in the same BEV window, descriptor space, and embedding, which is what makes
them comparable.  An optional map-side frontal-cone mask mirrors the camera
field of view for ablations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bev import crop, rasterize
from .config import PipelineConfig
from .features import extract_local
from .geometry import (CameraIntrinsics, DepthMap, DisparityMap, Extrinsics,
                       Pose, StereoRig, backproject, camera_extrinsics,
                       disparity_to_depth)
from .index import FrameRecord
from .training import EmbeddingMap
from .vlad import Codebook, aggregate


def frontal_cone_mask(cloud: np.ndarray, half_angle_deg: float) -> np.ndarray:
    """Points within the forward cone: y > 0 and planar bearing within limit."""
    cloud = np.asarray(cloud, dtype=np.float64)
    bearing = np.arctan2(np.abs(cloud[:, 0]), cloud[:, 1])
    return (cloud[:, 1] > 0) & (bearing <= math.radians(half_angle_deg))


@dataclass
class Pipeline:
    """Shared configuration plus the trained artifacts, if any."""

    cfg: PipelineConfig
    codebook: Codebook
    embedding: EmbeddingMap | None = None

    def describe_cloud(self, cloud: np.ndarray) -> np.ndarray:
        """Vehicle-frame cloud -> embedded global descriptor."""
        window = self.cfg.window()
        image = rasterize(crop(cloud, window), window, self.cfg.cell_size)
        features = extract_local(image, self.cfg.patch, self.cfg.stride)
        descriptor = aggregate(features, self.codebook)
        if self.embedding is not None:
            return self.embedding.embed(descriptor)
        return descriptor

    def build_map_frame(self, frame_id: int, scan: np.ndarray,
                        pose: Pose) -> FrameRecord:
        """Describe one mapped scan and package it with its pose."""
        scan = np.asarray(scan, dtype=np.float64)
        if self.cfg.map_frontal_cone:
            scan = scan[frontal_cone_mask(scan, self.cfg.cone_half_angle_deg)]
        return FrameRecord(frame_id, pose, self.describe_cloud(scan))

    def query_from_depth(self, depth: DepthMap, intrinsics: CameraIntrinsics,
                         extrinsics: Extrinsics | None = None) -> np.ndarray:
        """Depth image -> embedded query descriptor.

        Without explicit extrinsics the camera is assumed level and
        forward-looking at the vehicle origin.
        """
        extrinsics = extrinsics or camera_extrinsics()
        cloud = backproject(depth, intrinsics, extrinsics,
                            max_depth=self.cfg.depth_ceiling)
        return self.describe_cloud(cloud)

    def query_from_disparity(self, disparity: DisparityMap, rig: StereoRig,
                             extrinsics: Extrinsics | None = None) -> np.ndarray:
        """Disparity image -> depth -> embedded query descriptor."""
        depth = disparity_to_depth(disparity, rig)
        return self.query_from_depth(depth, rig.intrinsics, extrinsics)
