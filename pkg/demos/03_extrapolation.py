"""Extend a pattern beyond its frame, and add a row to a triangle.

Pixel extension grows the canvas and relaxes the loop bound facing
that side; condition relaxation admits one new diagonal of objects
inside the existing frame (the new row along a triangle's hypotenuse).
Writes results under demos/out/.
"""

import pathlib

import numpy as np

from regsynth import (
    Constant,
    Extension,
    LinearExpr,
    RasterImage,
    RegularityProgram,
    extrapolate,
    save_image,
)

out_dir = pathlib.Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

rng = np.random.default_rng(11)

# --- canvas extension: one period to the right -------------------------
tile = np.full((14, 14, 3), 28, dtype=np.uint8)
tile[3:11, 3:11] = rng.integers(100, 255, size=3)
image = RasterImage(np.tile(tile, (3, 3, 1)))
program = RegularityProgram(
    outer_range=(0, 3),
    inner_range=(0, 3),
    conditions=(),
    x_expr=LinearExpr(14, 0, 7),
    y_expr=LinearExpr(0, 14, 7),
    attribute=Constant(),
)
wider = extrapolate(image, program, Extension(right=14))
save_image(image, out_dir / "extrapolate_input.png")
save_image(wider, out_dir / "extrapolate_right.png")
print(f"canvas {image.width}x{image.height} -> {wider.width}x{wider.height}")
expected = RasterImage(np.tile(tile, (3, 4, 1)))
print(f"new column bit-exact: {wider == expected}")

# --- condition relaxation: a new hypotenuse row ------------------------
n = 5
canvas = np.full((7 * 14, 7 * 14, 3), 28, dtype=np.uint8)
for i in range(n):
    for j in range(n):
        if i + j <= n - 1:
            canvas[j * 14 : j * 14 + 14, i * 14 : i * 14 + 14] = tile
triangle = RasterImage(canvas)
tri_prog = RegularityProgram(
    outer_range=(0, n),
    inner_range=(0, n),
    conditions=(LinearExpr(-1, -1, n - 1),),
    x_expr=LinearExpr(14, 0, 7),
    y_expr=LinearExpr(0, 14, 7),
    attribute=Constant(),
)
extended = extrapolate(triangle, tri_prog, Extension(relax_condition=1))
save_image(triangle, out_dir / "triangle_input.png")
save_image(extended, out_dir / "triangle_plus_row.png")
new_sites = [(i, j) for i in range(n) for j in range(n) if i + j == n]
print(f"relaxing the boundary by 1 painted {len(new_sites)} new objects "
      f"along the hypotenuse")
