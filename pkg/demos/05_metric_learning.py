"""Learning a metric that separates places the raw descriptors confuse.

Hand-crafted descriptors treat every dimension as equally important.
When two distant sites happen to produce nearly identical statistics,
raw nearest-neighbor search flips a coin between them — perceptual
aliasing.  A linear embedding trained with a triplet loss re-weights
the dimensions so that geometrically close frames move together and
far-apart frames are pushed at least a margin apart.

This script builds such an aliased world, shows retrieval failing on
raw descriptors, trains the embedding (hard-negative mining kicks in
halfway through), and shows retrieval fixed.

Run:  python3 demos/05_metric_learning.py
"""

import numpy as np

from bevloc import (FrameDatabase, FrameRecord, TripletConfig, recall_at_n,
                    train_metric)
from bevloc.synthetic import aliased_sites


def recall1(mapper, db_desc, db_poses, query_desc, query_poses):
    """recall@1 at 10 m after passing every descriptor through mapper."""
    db = FrameDatabase()
    for i, (row, pose) in enumerate(zip(db_desc, db_poses)):
        db.insert(FrameRecord(i, pose, mapper(row)))
    results = [db.query_knn(mapper(q), 1) for q in query_desc]
    return recall_at_n(results, query_poses, db_poses, 10.0, 1)


def sparkline(values):
    blocks = ".:-=+*#%@"
    hi = max(values)
    return "".join(blocks[min(int(v / hi * (len(blocks) - 1)), len(blocks) - 1)]
                   if hi > 0 else blocks[0] for v in values)


def main():
    db_desc, db_poses, query_desc, query_poses = aliased_sites(
        np.random.default_rng(0))
    n = len(db_desc)
    site_gap = np.linalg.norm(db_poses[0].position - db_poses[-1].position)
    print("two sites, %.0f m apart; %d map frames + %d query frames,"
          " descriptors dim %d"
          % (site_gap, n, len(query_desc), db_desc.shape[1]))

    # --- 1. the aliasing problem ----------------------------------------
    # Cross-site descriptor distances barely exceed within-site ones.
    half = n // 2
    within = np.linalg.norm(db_desc[:half, None] - db_desc[None, :half],
                            axis=2)
    across = np.linalg.norm(db_desc[:half, None] - db_desc[None, half:],
                            axis=2)
    print("\nraw descriptor distances: within-site mean %.3f,"
          " across-site mean %.3f" % (within[np.triu_indices(half, 1)].mean(),
                                      across.mean()))

    before = recall1(lambda d: d, db_desc, db_poses, query_desc, query_poses)
    print("raw recall@1 (10 m): %.4f — nearest neighbor picks the wrong"
          " site about half the time" % before)

    # --- 2. train the triplet embedding -----------------------------------
    cfg = TripletConfig()
    print("\ntriplet config: margin %.1f, %d positives (< %.0f m) and"
          " %d negatives (> %.0f m) per anchor,"
          % (cfg.margin_m, cfg.n_pos, cfg.d_pos, cfg.n_neg, cfg.d_neg))
    print("hard-negative mining from epoch %d" % cfg.hard_mining_start_epoch)

    emb, trace = train_metric(db_desc, db_poses, cfg, epochs=20, seed=0,
                              learning_rate=0.1)
    print("\nmean triplet loss per epoch (20 epochs):")
    print("  " + sparkline(trace))
    print("  first %.4f -> last %.4f" % (trace[0], trace[-1]))
    print("  (epoch %d onward: negatives are the hardest under the"
          " current map)" % cfg.hard_mining_start_epoch)

    # --- 3. retrieval after the embedding ---------------------------------
    after = recall1(emb.embed, db_desc, db_poses, query_desc, query_poses)
    print("\nrecall@1 (10 m): %.4f -> %.4f" % (before, after))

    ew = emb.embed(db_desc)
    within_e = np.linalg.norm(ew[:half, None] - ew[None, :half], axis=2)
    across_e = np.linalg.norm(ew[:half, None] - ew[None, half:], axis=2)
    print("embedded distances: within-site mean %.3f, across-site mean %.3f"
          % (within_e[np.triu_indices(half, 1)].mean(), across_e.mean()))
    print("\nthe embedding amplified the low-amplitude dimensions that"
          " actually identify the site,")
    print("so the two places that looked identical now sit well apart in"
          " descriptor space.")


if __name__ == "__main__":
    main()
