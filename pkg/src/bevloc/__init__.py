"""Cross-modal place recognition: match camera depth against LiDAR maps.

Both modalities are collapsed into bird's-eye-view images, described by
aggregated local gradient statistics, optionally passed through a learned
linear embedding, and matched by exact nearest-neighbor search.
"""

from .bev import BevImage, CropWindow, crop, rasterize, to_pgm, write_pgm
from .config import PipelineConfig, load_config
from .errors import BevlocError, ConfigError, FormatError
from .evaluation import (DEFAULT_SPLIT, EvalConfig, SplitSpec, apply_split,
                         percent_count, recall_at_n, recall_at_percent,
                         threshold_sweep, write_metrics_csv, write_sweep_csv)
from .features import LocalFeatureSet, extract_local
from .geometry import (CameraIntrinsics, DepthMap, DisparityMap, Extrinsics,
                       Pose, StereoRig, backproject, camera_extrinsics,
                       disparity_to_depth)
from .index import FrameDatabase, FrameRecord, RetrievalResult
from .kitti import (read_calib, read_depth_png, read_disparity_png,
                    read_lidar_scan, read_poses, intrinsics_from_projection,
                    stereo_rig_from_projections, write_lidar_scan, write_png16)
from .pipeline import Pipeline, frontal_cone_mask
from .training import (EmbeddingMap, TripletBatch, TripletConfig,
                       load_embedding, mine_hard_negatives, save_embedding,
                       select_triplets, train_metric, triplet_grad,
                       triplet_loss)
from .vlad import (Codebook, aggregate, lloyd_kmeans, load_codebook,
                   save_codebook, train_codebook)

__version__ = "0.1.0"

__all__ = [
    "BevImage", "BevlocError", "CameraIntrinsics", "Codebook", "ConfigError",
    "CropWindow", "DEFAULT_SPLIT", "DepthMap", "DisparityMap", "EmbeddingMap",
    "EvalConfig", "Extrinsics", "FormatError", "FrameDatabase", "FrameRecord",
    "LocalFeatureSet", "Pipeline", "PipelineConfig", "Pose", "RetrievalResult",
    "SplitSpec", "StereoRig", "TripletBatch", "TripletConfig", "aggregate",
    "apply_split", "backproject", "camera_extrinsics", "crop",
    "disparity_to_depth", "extract_local", "frontal_cone_mask",
    "intrinsics_from_projection", "lloyd_kmeans", "load_codebook",
    "load_config", "load_embedding", "mine_hard_negatives", "percent_count",
    "rasterize", "read_calib", "read_depth_png", "read_disparity_png",
    "read_lidar_scan", "read_poses", "recall_at_n", "recall_at_percent",
    "save_codebook", "save_embedding", "select_triplets",
    "stereo_rig_from_projections", "threshold_sweep", "to_pgm",
    "train_codebook", "train_metric", "triplet_grad", "triplet_loss",
    "write_lidar_scan", "write_metrics_csv", "write_pgm", "write_png16",
    "write_sweep_csv",
]
