"""Command-line front end: build databases, train artifacts, query, evaluate.

Exit codes: 0 success, 1 usage error, 2 data or format error.  All commands
are deterministic given their inputs and ``--seed``; reruns overwrite their
output files byte-for-byte.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import PipelineConfig, load_config
from .errors import BevlocError, ConfigError
from .evaluation import (DEFAULT_SPLIT, percent_count, recall_at_n,
                         threshold_sweep, write_metrics_csv, write_sweep_csv)
from .features import extract_local
from .bev import crop, rasterize
from .geometry import Pose
from .index import FrameDatabase, FrameRecord, RetrievalResult
from .kitti import (read_calib, read_depth_png, read_disparity_png,
                    read_lidar_scan, read_poses, intrinsics_from_projection,
                    stereo_rig_from_projections)
from .pipeline import Pipeline
from .training import load_embedding, save_embedding, train_metric
from .vlad import load_codebook, save_codebook, train_codebook


class _Parser(argparse.ArgumentParser):
    """argparse flavor whose usage failures exit 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="bevloc",
                     description="Cross-modal place recognition on BEV images.")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for every stochastic stage")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker threads for per-frame stages")

    p = sub.add_parser("build-db", help="describe scans into a database file")
    common(p)
    p.add_argument("--scans", required=True, help="directory of .bin scans")
    p.add_argument("--poses", required=True, help="poses text file")
    p.add_argument("--codebook", required=True)
    p.add_argument("--embedding")
    p.add_argument("--sequence", help="restrict frames via --split")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-codebook", help="learn cluster centers from scans")
    common(p)
    p.add_argument("--scans", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-metric", help="learn an embedding from a database")
    common(p)
    p.add_argument("--db", required=True,
                   help="database of raw (unembedded) descriptors")
    p.add_argument("--out", required=True)

    p = sub.add_parser("query", help="rank database frames for depth images")
    common(p)
    p.add_argument("--db", required=True)
    p.add_argument("--depth", required=True,
                   help="16-bit PNG file or directory of them")
    p.add_argument("--calib", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--embedding")
    p.add_argument("--disparity", action="store_true",
                   help="treat the PNGs as disparity instead of depth")
    p.add_argument("--top", type=int, default=None,
                   help="results per query (default from config)")
    p.add_argument("--out", required=True)

    for name in ("eval", "sweep"):
        p = sub.add_parser(name, help="score retrieval against ground truth")
        common(p)
        p.add_argument("--db", required=True)
        p.add_argument("--depth", required=True)
        p.add_argument("--poses", required=True, help="query ground-truth poses")
        p.add_argument("--calib", required=True)
        p.add_argument("--codebook", required=True)
        p.add_argument("--embedding")
        p.add_argument("--disparity", action="store_true")
        p.add_argument("--sequence", default="synthetic",
                       help="sequence label for report rows")
        p.add_argument("--split", choices=("train", "val", "test"))
        p.add_argument("--out", required=True)
        if name == "sweep":
            p.add_argument("--thresholds",
                           help="comma-separated meters, strictly increasing")
    return parser


def _load_cfg(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    return cfg


def _numbered_files(root: str, suffix: str) -> list[tuple[int, Path]]:
    path = Path(root)
    if path.is_file():
        return [(0, path)]
    files = sorted(path.glob(f"*{suffix}"))
    if not files:
        raise ConfigError(f"{root}: no {suffix} files found")
    out = []
    for i, f in enumerate(files):
        out.append((int(f.stem) if f.stem.isdigit() else i, f))
    return out


def _apply_range(items, poses, sequence, split_role):
    """Restrict aligned (frames, poses) to the configured split range."""
    if split_role is None:
        return items, poses
    if sequence is None:
        raise ConfigError("--split needs --sequence to pick its ranges")
    ranges = [r for r in DEFAULT_SPLIT.ranges(split_role) if r[0] == sequence]
    if not ranges:
        return [], []
    keep = []
    for i, item in enumerate(items):
        if any(lo <= i <= hi for _, lo, hi in ranges):
            keep.append(i)
    if keep and keep[-1] >= len(items):
        raise ConfigError("split range exceeds available frames")
    return [items[i] for i in keep], [poses[i] for i in keep]


def _map_ordered(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _pipeline(cfg, codebook_path, embedding_path) -> Pipeline:
    codebook = load_codebook(codebook_path)
    embedding = load_embedding(embedding_path) if embedding_path else None
    return Pipeline(cfg, codebook, embedding)


def _query_descriptors(args, cfg, pipe):
    """Descriptors for every depth/disparity image under --depth."""
    calib = read_calib(args.calib)
    if "P2" not in calib:
        raise ConfigError(f"{args.calib}: missing projection P2")
    intr = intrinsics_from_projection(calib["P2"])
    frames = _numbered_files(args.depth, ".png")

    def describe(frame):
        _, path = frame
        if args.disparity:
            if "P3" not in calib:
                raise ConfigError(f"{args.calib}: missing projection P3")
            rig = stereo_rig_from_projections(calib["P2"], calib["P3"])
            return pipe.query_from_disparity(
                read_disparity_png(path, cfg.disparity_scale), rig)
        return pipe.query_from_depth(read_depth_png(path, cfg.depth_scale),
                                     intr)

    ids = [fid for fid, _ in frames]
    return ids, _map_ordered(describe, frames, args.jobs)


def _cmd_build_db(args) -> int:
    cfg = _load_cfg(args)
    pipe = _pipeline(cfg, args.codebook, args.embedding)
    frames = _numbered_files(args.scans, ".bin")
    poses = read_poses(args.poses)
    if len(poses) < len(frames):
        raise ConfigError(f"{args.poses}: {len(poses)} poses for "
                          f"{len(frames)} scans")
    frames, poses = _apply_range(frames, poses, args.sequence, args.split)

    def describe(frame_pose):
        (fid, path), pose = frame_pose
        return FrameRecord(fid, pose, pipe.describe_cloud(read_lidar_scan(path)))

    records = _map_ordered(describe, list(zip(frames, poses)), args.jobs)
    db = FrameDatabase()
    for record in records:
        db.insert(record)
    db.save(args.out)
    print(f"wrote {args.out}: {len(db)} frames, dim {db.dim}")
    return 0


def _cmd_train_codebook(args) -> int:
    cfg = _load_cfg(args)
    window = cfg.window()

    def features_of(frame):
        _, path = frame
        cloud = crop(read_lidar_scan(path), window)
        return extract_local(rasterize(cloud, window, cfg.cell_size),
                             cfg.patch, cfg.stride)

    corpus = _map_ordered(features_of, _numbered_files(args.scans, ".bin"),
                          args.jobs)
    codebook = train_codebook(corpus, cfg.clusters, args.seed)
    if cfg.alpha_override is not None:
        from .vlad import Codebook
        codebook = Codebook(codebook.centers, cfg.alpha_override)
    save_codebook(codebook, args.out)
    print(f"wrote {args.out}: {codebook.n_clusters} clusters, "
          f"dim {codebook.dim}, alpha {codebook.alpha:.6g}")
    return 0


def _cmd_train_metric(args) -> int:
    cfg = _load_cfg(args)
    db = FrameDatabase.load(args.db)
    emb, trace = train_metric(db.descriptors, db.poses, cfg.triplet(),
                              epochs=cfg.epochs, seed=args.seed,
                              output_dim=cfg.embedding_dim,
                              learning_rate=cfg.learning_rate)
    save_embedding(emb, args.out)
    print(f"wrote {args.out}: {emb.output_dim}x{emb.input_dim}, "
          f"loss {trace[0]:.4f} -> {trace[-1]:.4f}"
          if len(trace) else f"wrote {args.out} (no epochs)")
    return 0


def _cmd_query(args) -> int:
    cfg = _load_cfg(args)
    pipe = _pipeline(cfg, args.codebook, args.embedding)
    db = FrameDatabase.load(args.db)
    ids, descriptors = _query_descriptors(args, cfg, pipe)
    top = args.top if args.top is not None else cfg.query_top_n
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query", "rank", "frame_id", "distance"])
        for qid, descriptor in zip(ids, descriptors):
            result = db.query_knn(descriptor, top)
            for rank, (fid, dist) in enumerate(result, start=1):
                writer.writerow([qid, rank, fid, f"{dist:.9f}"])
    print(f"wrote {args.out}: {len(ids)} queries, top {top}")
    return 0


def _retrieval_results(args, cfg):
    pipe = _pipeline(cfg, args.codebook, args.embedding)
    db = FrameDatabase.load(args.db)
    ids, descriptors = _query_descriptors(args, cfg, pipe)
    poses = read_poses(args.poses)
    if len(poses) < len(descriptors):
        raise ConfigError(f"{args.poses}: {len(poses)} poses for "
                          f"{len(descriptors)} queries")
    pairs = list(zip(ids, descriptors))
    pairs, poses = _apply_range(pairs, poses[:len(pairs)], args.sequence,
                                args.split)
    if not pairs:
        raise ConfigError("no queries left after applying the split")
    ids = [i for i, _ in pairs]

    need = max(cfg.top_n, percent_count(cfg.percent, len(db)))
    if cfg.exclude_window > 0:
        need += 2 * cfg.exclude_window + 1
    results = []
    for qid, (_, descriptor) in zip(ids, pairs):
        res = db.query_knn(descriptor, min(need, len(db)))
        if cfg.exclude_window > 0:
            keep = np.abs(res.frame_ids - qid) > cfg.exclude_window
            res = RetrievalResult(res.frame_ids[keep], res.distances[keep])
        results.append(res)
    db_poses = {fid: pose for fid, pose in zip(db.frame_ids, db.poses)}
    return results, poses, db_poses, len(db)


def _cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    results, qposes, db_poses, db_size = _retrieval_results(args, cfg)
    t = cfg.tp_threshold
    rows = [
        ("recall_at_1", args.sequence,
         recall_at_n(results, qposes, db_poses, t, 1)),
        ("recall_at_1pct", args.sequence,
         recall_at_n(results, qposes, db_poses, t,
                     percent_count(cfg.percent, db_size))),
    ]
    if cfg.top_n > 1:
        rows.append((f"recall_at_{cfg.top_n}", args.sequence,
                     recall_at_n(results, qposes, db_poses, t, cfg.top_n)))
    write_metrics_csv(args.out, rows)
    for metric, _, value in rows:
        print(f"{metric}: {value:.4f}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    if args.thresholds:
        thresholds = tuple(float(t) for t in args.thresholds.split(","))
    else:
        thresholds = cfg.sweep_thresholds
    results, qposes, db_poses, _ = _retrieval_results(args, cfg)
    pairs = threshold_sweep(results, qposes, db_poses, thresholds)
    write_sweep_csv(args.out, pairs)
    for t, r in pairs:
        print(f"t={t:g}m: recall@1 {r:.4f}")
    return 0


_COMMANDS = {
    "build-db": _cmd_build_db,
    "train-codebook": _cmd_train_codebook,
    "train-metric": _cmd_train_metric,
    "query": _cmd_query,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
}


def run(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return _COMMANDS[args.command](args)


def main(argv=None) -> int:
    try:
        return run(argv)
    except (BevlocError, OSError, ValueError, RuntimeError) as exc:
        print(f"bevloc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
