"""Image representation, IO, and patch-aggregation stack construction.

Images are 8-bit RGB with a per-pixel validity mask (True = known,
False = hole). Arrays are frozen after construction so images can be
shared across parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dsl import DrawCommand
from .errors import DomainError
from .geometry import Point2


class RasterImage:
    """Row-major RGB pixel grid plus validity mask."""

    __slots__ = ("pixels", "mask")

    def __init__(self, pixels: np.ndarray, mask: np.ndarray | None = None):
        pixels = np.asarray(pixels)
        if pixels.ndim == 2:
            pixels = np.repeat(pixels[:, :, None], 3, axis=2)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise DomainError(f"expected HxWx3 pixels, got shape {pixels.shape}")
        pixels = pixels.astype(np.uint8, copy=True)
        if mask is None:
            mask = np.ones(pixels.shape[:2], dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool).copy()
            if mask.shape != pixels.shape[:2]:
                raise DomainError("mask dimensions must equal image dimensions")
        pixels.setflags(write=False)
        mask.setflags(write=False)
        self.pixels = pixels
        self.mask = mask

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def bounds(self) -> tuple[int, int]:
        return (self.width, self.height)

    def __eq__(self, other):
        return (
            isinstance(other, RasterImage)
            and np.array_equal(self.pixels, other.pixels)
            and np.array_equal(self.mask, other.mask)
        )

    def __repr__(self):
        holes = int((~self.mask).sum())
        return f"RasterImage({self.width}x{self.height}, holes={holes})"

    @classmethod
    def blank(cls, width: int, height: int, color=0, valid: bool = True) -> "RasterImage":
        pixels = np.full((height, width, 3), color, dtype=np.uint8)
        mask = np.full((height, width), valid, dtype=bool)
        return cls(pixels, mask)

    def with_holes(self, holes: np.ndarray) -> "RasterImage":
        """New image whose mask excludes ``holes``; hole pixels are zeroed."""
        holes = np.asarray(holes, dtype=bool)
        mask = self.mask & ~holes
        pixels = self.pixels.copy()
        pixels[~mask] = 0
        return RasterImage(pixels, mask)

    def translated(self, dx: int, dy: int) -> "RasterImage":
        """Integer-shift by (dx, dy); pixels shifted in from outside the
        frame are holes with value 0. No resampling."""
        h, w = self.pixels.shape[:2]
        out_px = np.zeros_like(self.pixels)
        out_mask = np.zeros((h, w), dtype=bool)
        sx0, sx1 = max(0, -dx), min(w, w - dx)
        sy0, sy1 = max(0, -dy), min(h, h - dy)
        if sx0 < sx1 and sy0 < sy1:
            tx0, ty0 = sx0 + dx, sy0 + dy
            out_px[ty0 : ty0 + (sy1 - sy0), tx0 : tx0 + (sx1 - sx0)] = self.pixels[
                sy0:sy1, sx0:sx1
            ]
            out_mask[ty0 : ty0 + (sy1 - sy0), tx0 : tx0 + (sx1 - sx0)] = self.mask[
                sy0:sy1, sx0:sx1
            ]
        return RasterImage(out_px, out_mask)


# ------------------------------------------------------------------------ IO


def _read_ppm(path) -> RasterImage:
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P6":
        raise DomainError(f"not a P6 PPM file: {path}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise DomainError("only 8-bit PPM supported")
    raw = data[pos + 1 : pos + 1 + w * h * 3]
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return RasterImage(pixels)


def _write_ppm(image: RasterImage, path) -> None:
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(image.pixels.tobytes())


def load_image(path) -> RasterImage:
    """Read a PNG (RGB, RGBA with alpha=0 as holes, or grayscale) or a
    P6 PPM."""
    name = str(path)
    if name.lower().endswith(".ppm"):
        return _read_ppm(path)
    from PIL import Image

    with Image.open(path) as img:
        if img.mode == "RGBA":
            arr = np.asarray(img)
            return RasterImage(arr[:, :, :3], arr[:, :, 3] > 0)
        arr = np.asarray(img.convert("RGB"))
        return RasterImage(arr)


def save_image(image: RasterImage, path) -> None:
    """Write PNG (RGBA when the image has holes) or P6 PPM by extension."""
    name = str(path)
    if name.lower().endswith(".ppm"):
        _write_ppm(image, path)
        return
    from PIL import Image

    if image.mask.all():
        Image.fromarray(image.pixels, "RGB").save(path)
    else:
        rgba = np.dstack([image.pixels, image.mask.astype(np.uint8) * 255])
        Image.fromarray(rgba, "RGBA").save(path)


def load_mask(path) -> np.ndarray:
    """Read a 1-channel mask image: 0 = hole, nonzero = known."""
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return arr > 0


# ------------------------------------------------------------- aggregation


@dataclass(frozen=True)
class AggregationStack:
    """The painter's input for one target object.

    base     the corrupted input image
    target   centroid of the object containing holes
    layers   one image per source object, translated so the source
             centroid sits at the target centroid; out-of-frame pixels
             have mask 0 and value 0
    sources  the DrawCommands the layers came from, aligned with layers
    """

    base: RasterImage
    target: Point2
    layers: tuple[RasterImage, ...]
    sources: tuple[DrawCommand, ...]

    def __post_init__(self):
        if len(self.layers) != len(self.sources):
            raise DomainError("layers and sources must align")
        for layer in self.layers:
            if layer.bounds != self.base.bounds:
                raise DomainError("layer dimensions must match the base image")


def build_stack(
    image: RasterImage, program_draws: Sequence[DrawCommand], target_index: int
) -> AggregationStack:
    """Translate the image once per source object onto the target.

    Sources are all draws except the target, in draw (i, j) order; the
    k-th layer shifts the image by target position minus source
    position, rounded to integers.
    """
    if len(program_draws) < 2:
        raise DomainError("no source objects")
    if not (0 <= target_index < len(program_draws)):
        raise DomainError(f"target index {target_index} out of range")
    target = program_draws[target_index]
    tx, ty = target.position
    layers, sources = [], []
    for k, draw in enumerate(program_draws):
        if k == target_index:
            continue
        dx = int(round(tx - draw.position.x))
        dy = int(round(ty - draw.position.y))
        layers.append(image.translated(dx, dy))
        sources.append(draw)
    return AggregationStack(
        base=image, target=target.position, layers=tuple(layers), sources=tuple(sources)
    )


def attribute_filter(
    stack: AggregationStack, draws: Sequence[DrawCommand], target_attribute: int
) -> AggregationStack:
    """Keep only layers whose source draw carries the target attribute.

    ``draws`` must be the per-layer source draws (same order/length as
    the stack's layers).
    """
    if len(draws) != len(stack.layers):
        raise DomainError("draws must align with stack layers")
    keep = [k for k, d in enumerate(draws) if d.attribute == target_attribute]
    if not keep:
        raise DomainError("no same-attribute sources")
    return AggregationStack(
        base=stack.base,
        target=stack.target,
        layers=tuple(stack.layers[k] for k in keep),
        sources=tuple(stack.sources[k] for k in keep),
    )
