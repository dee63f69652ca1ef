"""From a BEV image to a single place descriptor you can compare.

The recipe is classic visual-words aggregation: dense local
gradient-histogram patches are pooled against a learned codebook of
visual words into one L2-normalized vector per frame.  Two descriptors
computed at the same place — even on different passes — land close
together; descriptors from elsewhere in town land farther away.  That
separation is what makes nearest-neighbor place recognition work.

This script maps a town once, then drives the loop a second time a
couple of meters ahead of the first pass and asks, for every revisit
frame, "which map frame is nearest in descriptor space?"

Run:  python3 demos/03_global_descriptors.py
"""

import numpy as np

from bevloc import CropWindow, aggregate, crop, extract_local, rasterize, train_codebook
from bevloc.synthetic import loop_trajectory, sectored_town, world_to_vehicle


def bev_image(world, pose):
    """Express the world in the pose's frame, crop, and rasterize."""
    local = crop(world_to_vehicle(world, pose), CropWindow())
    return rasterize(local, CropWindow(), 0.4)


def main():
    world = sectored_town(np.random.default_rng(3))
    ring = loop_trajectory(200, radius=60.0)
    map_poses = ring[0::5]   # 40 mapping frames, 9.4 m apart
    revisit = ring[1::5]     # second pass, 1.9 m ahead of each map frame
    print("town: %d points; map pass: %d frames on a 60 m ring;"
          % (len(world), len(map_poses)))
    print("revisit pass: %d frames, each 1.9 m ahead of a map frame"
          % len(revisit))

    # --- 1. local features from one frame -------------------------------
    image = bev_image(world, map_poses[0])
    feats = extract_local(image)
    print("\nframe 0 local features: %d patches, %d-dim each"
          % (feats.descriptors.shape[0], feats.descriptors.shape[1]))
    norms = np.linalg.norm(feats.descriptors, axis=1)
    print("patch descriptor norms: min %.3f, max %.3f (unit unless flat)"
          % (norms.min(), norms.max()))

    # --- 2. learn a codebook of visual words ----------------------------
    corpus = [extract_local(bev_image(world, p)) for p in map_poses[::4]]
    codebook = train_codebook(corpus, k=16, seed=0)
    print("\ncodebook: %d words of dim %d (softness alpha = %.1f)"
          % (codebook.centers.shape[0], codebook.centers.shape[1],
             codebook.alpha))

    # --- 3. one vector per frame ----------------------------------------
    def describe(pose):
        return aggregate(extract_local(bev_image(world, pose)), codebook)

    map_descs = np.array([describe(p) for p in map_poses])
    rev_descs = np.array([describe(p) for p in revisit])
    print("global descriptors: %s per pass, every norm = %.6f"
          % (map_descs.shape, np.linalg.norm(map_descs, axis=1).mean()))

    # --- 4. revisit matching in descriptor space ------------------------
    sims = rev_descs @ map_descs.T          # cosine (unit vectors)
    top1 = sims.argmax(axis=1)

    print("\n query   best map frame   cosine   pose gap")
    for i in (0, 7, 14, 21, 28, 35):
        j = int(top1[i])
        gap = np.linalg.norm(map_poses[j].position - revisit[i].position)
        flag = "  <- aliased!" if gap > 10.0 else ""
        print("  %4d   %14d   %.4f   %6.1f m%s" % (i, j, sims[i, j], gap,
                                                   flag))

    hits = int((top1 == np.arange(len(revisit))).sum())
    print("\ntop-1 descriptor match is the co-located map frame for"
          " %d / %d revisit frames" % (hits, len(revisit)))
    for i in np.nonzero(top1 != np.arange(len(revisit)))[0]:
        j = int(top1[i])
        gap = np.linalg.norm(map_poses[j].position - revisit[i].position)
        print("the miss: query %d matched map frame %d, %.0f m away —"
              " two stretches of town that genuinely look alike from"
              " above" % (i, j, gap))
    print("(05_metric_learning.py shows how a learned embedding pulls"
          " such look-alikes apart)")


if __name__ == "__main__":
    main()
