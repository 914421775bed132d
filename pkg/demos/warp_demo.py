"""Paste a checkerboard texture into a scene under a few poses.

Writes side-by-side PNGs under demos/out/ so the foreshortening and
rotation of the warp are visible, and prints what fraction of the image
each pose covers.
"""

from pathlib import Path

import numpy as np

from patchpose.data import render_scene
from patchpose.geometry import PatchPlacement, intrinsics_from_fov
from patchpose.render import apply_patch, texture_to_png

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

k = intrinsics_from_fov(60.0, 64, 64)
scene = render_scene(0, seed=123, size=64)

# 8x8 checkerboard over a 64x64 texture
tiles = (np.add.outer(np.arange(64) // 8, np.arange(64) // 8) % 2).astype(float)
texture = np.stack([tiles, 1.0 - tiles, np.full((64, 64), 0.3)], axis=-1)

poses = [
    ("fronto", PatchPlacement()),
    ("yaw50", PatchPlacement(yaw_deg=50.0)),
    ("roll35", PatchPlacement(roll_deg=35.0)),
    ("near", PatchPlacement(depth=4.0)),
    ("far_corner", PatchPlacement(depth=10.0, offset=(1.2, -0.9))),
]

for name, pl in poses:
    composed, rec = apply_patch(texture, pl, k, scene)
    cover = rec.pix_rows.size / scene[:, :, 0].size
    print(f"{name:11s} yaw={pl.yaw_deg:5.1f} roll={pl.roll_deg:5.1f} "
          f"z={pl.depth:4.1f}  covers {100 * cover:4.1f}% of the image")
    texture_to_png(composed, out_dir / f"warp_{name}.png")

print(f"\nwrote {len(poses)} composites to {out_dir}/")
