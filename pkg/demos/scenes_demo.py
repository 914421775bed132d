"""Contact sheet of the 12 scene classes.

Renders three samples of every class into one tiled image under
demos/out/ and prints the shape x color naming scheme.
"""

from pathlib import Path

import numpy as np

from patchpose.data import class_color, class_shape, render_scene
from patchpose.render import texture_to_png

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

size = 64
pad = 2
rows, cols = 12, 3
sheet = np.ones((rows * (size + pad) - pad, cols * (size + pad) - pad, 3))

color_names = ("red", "green", "blue")
for cls in range(12):
    rgb = class_color(cls)
    print(f"class {cls:2d}: {color_names[cls % 3]:5s} {class_shape(cls):8s} "
          f"rgb=({rgb[0]:.2f},{rgb[1]:.2f},{rgb[2]:.2f})")
    for j in range(cols):
        img = render_scene(cls, seed=1000 * cls + j, size=size)
        r0 = cls * (size + pad)
        c0 = j * (size + pad)
        sheet[r0:r0 + size, c0:c0 + size] = img

texture_to_png(sheet, out_dir / "classes.png")
print(f"\nwrote contact sheet to {out_dir / 'classes.png'}")
