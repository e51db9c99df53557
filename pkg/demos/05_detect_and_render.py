"""Full pipeline on pixels alone: detect, synthesize, render an overlay.

No centroids are given; the detector finds them from response-map peaks
and displacement voting, the synthesizer fits the program, and the
overlay SVG shows detected centroids against the reconstructed lattice.
"""

import pathlib

import numpy as np

from regsynth import RasterImage, SynthConfig, detect_centroids, save_image, synthesize, unparse
from regsynth.cli import render_overlay

out_dir = pathlib.Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

tile = np.full((20, 20, 3), 26, dtype=np.uint8)
tile[6:15, 6:15] = (240, 200, 50)
tile[9:12, 9:12] = (30, 70, 210)
image = RasterImage(np.tile(tile, (5, 5, 1)))
save_image(image, out_dir / "detect_input.png")

centroids = detect_centroids(image)
print(f"detected {len(centroids)} centroids")

program = synthesize(
    centroids, image, config=SynthConfig(spacing_min=10, spacing_max=32)
)
print(unparse(program))

svg = render_overlay(centroids, program)
(out_dir / "overlay.svg").write_text(svg)
print(f"wrote {out_dir/'overlay.svg'}")
