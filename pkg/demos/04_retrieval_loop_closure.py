"""Closing loops: match camera-depth queries against a range-scan map.

The map side of the pipeline ingests full surround scans (think lidar);
the query side ingests only a depth image from a forward camera.  Both
are reduced to the same BEV descriptor, so a query can be answered by
exact nearest-neighbor search over the map database — place recognition
across sensing modalities.

This script maps a loop with clean scans, drives it again with a noisy
wide-angle depth camera, and measures how often the top-ranked map frame
is the right place (recall@1) and how often the right place appears in
the top 1% of the database (recall@1%).

Writes demos/output/loop_map.db (reloadable frame database).

Run:  python3 demos/04_retrieval_loop_closure.py
"""

import math
import os
import time

import numpy as np

from bevloc import (CameraIntrinsics, EmbeddingMap, FrameDatabase, Pipeline,
                    PipelineConfig, crop, extract_local, rasterize,
                    recall_at_n, recall_at_percent, threshold_sweep,
                    train_codebook)
from bevloc.synthetic import (add_point_noise, loop_trajectory, render_depth,
                              sectored_town, world_to_vehicle)

N_FRAMES = 120
WIDTH, HEIGHT, MAX_DEPTH = 1280, 256, 60.0


def main():
    t0 = time.perf_counter()
    world = sectored_town(np.random.default_rng(8))
    poses = loop_trajectory(N_FRAMES, radius=60.0)
    clouds = [world_to_vehicle(world, p) for p in poses]
    print("town: %d points; loop: %d frames, %.1f m apart"
          % (len(world), N_FRAMES, 2 * math.pi * 60.0 / N_FRAMES))

    # A wide-angle depth camera: 150 degree horizontal field of view.
    f = (WIDTH / 2.0) / math.tan(math.radians(75.0))
    intr = CameraIntrinsics(f, 120.0, (WIDTH - 1) / 2.0, (HEIGHT - 1) / 2.0)
    print("query camera: %dx%d px, f = %.0f px (150 deg HFOV), range %.0f m"
          % (WIDTH, HEIGHT, f, MAX_DEPTH))

    # --- 1. build the map from clean scans ------------------------------
    cfg = PipelineConfig()
    window = cfg.window()
    corpus = [extract_local(rasterize(crop(c, window), window, cfg.cell_size),
                            cfg.patch, cfg.stride) for c in clouds[::5]]
    codebook = train_codebook(corpus, k=cfg.clusters, seed=0)
    dim = codebook.n_clusters * codebook.dim
    pipe = Pipeline(cfg, codebook, EmbeddingMap.identity(dim, output_dim=dim))

    db = FrameDatabase()
    for i, (cloud, pose) in enumerate(zip(clouds, poses)):
        db.insert(pipe.build_map_frame(i, cloud, pose))
    print("\nmap database: %d frames, %d-dim descriptors (built in %.1fs)"
          % (len(db), dim, time.perf_counter() - t0))

    out_dir = os.path.join(os.path.dirname(__file__), "output")
    os.makedirs(out_dir, exist_ok=True)
    db_path = os.path.join(out_dir, "loop_map.db")
    db.save(db_path)
    reloaded = FrameDatabase.load(db_path)
    print("saved to %s (%d bytes), reloads with %d frames"
          % (db_path, os.path.getsize(db_path), len(reloaded)))

    # --- 2. query pass: noisy depth renders -----------------------------
    noise = np.random.default_rng(7)
    queries = []
    for cloud in clouds:
        depth = render_depth(add_point_noise(cloud, 0.05, noise), intr,
                             WIDTH, HEIGHT, MAX_DEPTH)
        queries.append(pipe.query_from_depth(depth, intr))
    print("\nrendered and described %d noisy depth images (sigma = 5 cm)"
          % len(queries))

    # --- 3. one query in detail -----------------------------------------
    k = N_FRAMES // 3
    res = db.query_knn(queries[k], 5)
    print("\nquery %d (true position %.1f, %.1f) — top 5 map frames:" %
          (k, poses[k].position[0], poses[k].position[1]))
    print("  rank   frame   descriptor dist   pose gap")
    for rank, (fid, dist) in enumerate(zip(res.frame_ids, res.distances), 1):
        gap = np.linalg.norm(poses[fid].position - poses[k].position)
        print("  %4d   %5d   %15.4f   %6.1f m" % (rank, fid, dist, gap))

    # --- 4. recall over the whole loop -----------------------------------
    results = [db.query_knn(q, max(5, len(db) // 100)) for q in queries]
    db_positions = {i: poses[i].position for i in range(N_FRAMES)}
    r1 = recall_at_n(results, poses, db_positions, t=10.0, n=1)
    rpct = recall_at_percent(results, poses, db_positions, t=10.0,
                             percent=0.01)
    print("\nrecall@1  (top frame within 10 m):        %.4f" % r1)
    print("recall@1%% (top 1%% of db within 10 m):      %.4f" % rpct)

    print("\nhow recall@1 depends on the distance threshold:")
    for t, r in threshold_sweep(results, poses, db_positions):
        print("  t = %4.0f m   recall@1 = %.4f" % (t, r))
    print("\ntotal: %.1fs" % (time.perf_counter() - t0))


if __name__ == "__main__":
    main()
