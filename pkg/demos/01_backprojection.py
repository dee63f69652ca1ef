"""From a stereo disparity image to a metric 3-D point cloud.

A rectified stereo pair encodes depth as horizontal pixel offset
(disparity).  This walkthrough converts a tiny synthetic disparity image
to depth, back-projects every valid pixel through the pinhole model, and
shows that re-projecting the points recovers the original pixels.

Run:  python3 demos/01_backprojection.py
"""

import numpy as np

from bevloc import (CameraIntrinsics, DisparityMap, Extrinsics, StereoRig,
                    backproject, camera_extrinsics, disparity_to_depth)


def main():
    # A 720 px focal length and a 0.54 m baseline, roughly a KITTI-class rig.
    intr = CameraIntrinsics(f_u=720.0, f_v=720.0, c_u=3.5, c_v=1.5)
    rig = StereoRig(intr, baseline_b=0.54)
    print("stereo rig: f_u = %.0f px, baseline = %.2f m" % (intr.f_u,
                                                            rig.baseline_b))

    # --- 1. disparity image -> depth image -----------------------------
    # 4x8 pixels; disparity falls off to the right, so depth rises.
    # A zero marks a pixel where stereo matching failed.
    disparity_px = np.array([
        [64.0, 48.0, 38.9, 32.0, 25.9, 19.4, 12.9, 6.5],
        [64.0, 48.0, 38.9, 32.0, 25.9, 19.4, 12.9, 6.5],
        [77.8, 51.8, 38.9, 0.0, 25.9, 15.6, 11.1, 7.8],
        [77.8, 51.8, 38.9, 31.1, 25.9, 15.6, 11.1, 7.8],
    ])
    disparity = DisparityMap(disparity_px, disparity_px > 0)
    depth = disparity_to_depth(disparity, rig)
    print("\ndepth (m), one row; '  --  ' marks the failed pixel:")
    for row in range(depth.height):
        cells = ["%6.1f" % depth.values[row, col] if depth.valid[row, col]
                 else "  --  " for col in range(depth.width)]
        print("  " + " ".join(cells))
    print("depth = f_u * baseline / disparity; e.g. %.1f px -> %.2f m"
          % (disparity_px[0, 0], 720.0 * 0.54 / disparity_px[0, 0]))

    # --- 2. depth image -> camera-frame cloud --------------------------
    cam_cloud = backproject(depth, intr, Extrinsics(np.eye(3), np.zeros(3)))
    print("\nback-projected %d points (one per valid pixel, %d masked)"
          % (len(cam_cloud), (~depth.valid).sum()))
    print("nearest point:  (%.2f, %.2f, %.2f) m" % tuple(
        cam_cloud[np.argmin(cam_cloud[:, 2])]))
    print("farthest point: (%.2f, %.2f, %.2f) m" % tuple(
        cam_cloud[np.argmax(cam_cloud[:, 2])]))

    # --- 3. round trip: project the cloud back to pixels ---------------
    vs, us = np.nonzero(depth.valid)
    d = cam_cloud[:, 2]
    u = intr.f_u * cam_cloud[:, 0] / d + intr.c_u
    v = intr.f_v * cam_cloud[:, 1] / d + intr.c_v
    print("\nround trip max pixel error: %.2e px (u), %.2e px (v)"
          % (np.abs(u - us).max(), np.abs(v - vs).max()))

    # --- 4. camera frame vs vehicle frame -------------------------------
    # The camera looks along its z axis with y pointing down; the vehicle
    # frame has x right, y forward, z up.  camera_extrinsics() is that
    # axis permutation, so a point 10 m along the optical axis lands 10 m
    # *forward* of the vehicle.
    veh_cloud = backproject(depth, intr, camera_extrinsics())
    k = np.argmax(cam_cloud[:, 2])
    print("\nsame pixel in both frames:")
    print("  camera  (x right, y down, z fwd): (%.2f, %.2f, %.2f)"
          % tuple(cam_cloud[k]))
    print("  vehicle (x right, y fwd,  z up):  (%.2f, %.2f, %.2f)"
          % tuple(veh_cloud[k]))


if __name__ == "__main__":
    main()
