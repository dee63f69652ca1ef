"""From a vehicle-frame point cloud to a bird's-eye-view density image.

Points in front of the vehicle are cropped to a fixed metric window,
binned into 0.4 m grid cells, and the per-cell hit counts become an
8-bit grayscale image.  The result is a compact, rotation-stable top-down
signature of the local structure — the raw material every descriptor in
this package is computed from.

Writes demos/output/bev_scene.pgm (viewable in most image tools).

Run:  python3 demos/02_bev_rasterization.py
"""

import os

import numpy as np

from bevloc import CropWindow, crop, rasterize, write_pgm
from bevloc.synthetic import box_cloud


def street_scene(rng):
    """Two building fronts flanking a 10 m corridor, plus a far wall."""
    parts = [
        box_cloud((-12.0, 22.0, 1.5), (8.0, 30.0, 3.0), 2500, rng),
        box_cloud((12.0, 22.0, 1.5), (8.0, 30.0, 3.0), 2500, rng),
        box_cloud((0.0, 44.0, 2.0), (30.0, 3.0, 4.0), 1500, rng),
        box_cloud((-3.0, 12.0, 0.5), (1.5, 1.5, 1.0), 300, rng),  # parked obstacle
    ]
    return np.vstack(parts)


def ascii_preview(image, step=4):
    """Coarse terminal rendering of the BEV image (far row on top).

    Text cells are taller than wide, so each character covers a step x step
    block of raster cells.  Row 0 of the raster is already the far edge,
    so rows print in order.  ``values`` is already normalized to [0, 1].
    """
    vals = image.values
    shades = " .:+*#@"
    rows = []
    for r in range(0, vals.shape[0] - step + 1, step):
        line = ""
        for c in range(0, vals.shape[1] - step + 1, step):
            v = vals[r:r + step, c:c + step].max()
            line += shades[min(int(v * len(shades)), len(shades) - 1)]
        rows.append(line)
    return "\n".join(rows)


def main():
    rng = np.random.default_rng(11)
    cloud = street_scene(rng)
    print("scene: %d points, x span [%.1f, %.1f] m, y span [%.1f, %.1f] m"
          % (len(cloud), cloud[:, 0].min(), cloud[:, 0].max(),
             cloud[:, 1].min(), cloud[:, 1].max()))

    # --- 1. crop to the metric window in front of the vehicle -----------
    window = CropWindow()  # x in [-25, 25], y in [0, 50], z in [-5, 5]
    kept = crop(cloud, window)
    print("crop window keeps %d / %d points" % (len(kept), len(cloud)))

    # --- 2. rasterize: 0.4 m cells -> 125 x 125 occupancy counts --------
    image = rasterize(cloud, window, cell_size=0.4)
    print("raster: %d x %d cells, %.1f m per cell"
          % (image.values.shape[0], image.values.shape[1], 0.4))
    print("count conservation: raw_counts.sum() = %d (== points kept)"
          % image.raw_counts.sum())
    print("busiest cell holds %d points; %.1f%% of cells are empty"
          % (image.raw_counts.max(),
             100.0 * (image.raw_counts == 0).mean()))

    # --- 3. write the 8-bit PGM artifact --------------------------------
    out_dir = os.path.join(os.path.dirname(__file__), "output")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "bev_scene.pgm")
    write_pgm(image, path)
    print("\nwrote %s (%d bytes)" % (path, os.path.getsize(path)))

    print("\ntop-down preview (vehicle at bottom center, far wall on top):")
    print(ascii_preview(image))


if __name__ == "__main__":
    main()
