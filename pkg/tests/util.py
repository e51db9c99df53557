"""Shared builders for synthetic instances used across the test suite."""

import numpy as np

from regsynth.dsl import (
    Constant,
    IsZero,
    IsZeroBoth,
    LinearExpr,
    Modulo,
    ModuloBoth,
    Quotient,
    RegularityProgram,
)
from regsynth.geometry import CentroidSet, Point2
from regsynth.raster import RasterImage


def random_linear_expr(rng, lo=-9, hi=9):
    return LinearExpr(
        int(rng.integers(lo, hi + 1)),
        int(rng.integers(lo, hi + 1)),
        int(rng.integers(lo, hi + 1)),
    )


def random_attribute(rng):
    kind = rng.integers(0, 6)
    if kind == 0:
        return Constant()
    if kind == 1:
        return Quotient(random_linear_expr(rng, -3, 3), int(rng.integers(2, 6)))
    if kind == 2:
        return IsZero(random_linear_expr(rng, -3, 3))
    if kind == 3:
        return IsZeroBoth(random_linear_expr(rng, -3, 3), random_linear_expr(rng, -3, 3))
    if kind == 4:
        return Modulo(random_linear_expr(rng, -3, 3), int(rng.integers(2, 6)))
    return ModuloBoth(
        random_linear_expr(rng, -3, 3),
        int(rng.integers(2, 6)),
        random_linear_expr(rng, -3, 3),
        int(rng.integers(2, 6)),
    )


def random_program(rng):
    """Any grammar-valid program; no lattice-model constraints."""
    lo_i = int(rng.integers(-4, 4))
    lo_j = int(rng.integers(-4, 4))
    conditions = tuple(
        random_linear_expr(rng, -4, 4) for _ in range(int(rng.integers(0, 3)))
    )
    return RegularityProgram(
        outer_range=(lo_i, lo_i + int(rng.integers(1, 7))),
        inner_range=(lo_j, lo_j + int(rng.integers(1, 7))),
        conditions=conditions,
        x_expr=random_linear_expr(rng),
        y_expr=LinearExpr(0, int(rng.integers(-9, 10)), int(rng.integers(-9, 10))),
        attribute=random_attribute(rng),
    )


def lattice_points(model, region, jitter=0.0, drop=0.0, rng=None, bounds=None):
    """Points of a 5-tuple lattice over an (i, j) region, optionally
    jittered and subsampled. model = (b_x, b_y, d_xi, d_xj, d_yj)."""
    b_x, b_y, d_xi, d_xj, d_yj = model
    pts, idx = [], []
    for i, j in region:
        x = b_x + i * d_xi + j * d_xj
        y = b_y + j * d_yj
        if bounds is not None and not (0 <= x < bounds[0] and 0 <= y < bounds[1]):
            continue
        pts.append((float(x), float(y)))
        idx.append((i, j))
    pts = np.asarray(pts, dtype=float)
    if jitter > 0:
        pts = pts + rng.normal(0.0, jitter, size=pts.shape)
    if drop > 0:
        keep = rng.random(len(pts)) >= drop
        if keep.sum() < 4:
            keep[:] = True
        pts, idx = pts[keep], [k for k, m in zip(idx, keep) if m]
    if bounds is not None:
        w, h = bounds
        pts = np.clip(pts, [0, 0], [w - 1e-6, h - 1e-6])
    return pts, idx


def centroid_set(points, bounds):
    return CentroidSet(points=tuple(Point2(*p) for p in points), image_bounds=bounds)


def rect_region(ni, nj):
    return [(i, j) for i in range(ni) for j in range(nj)]


def make_tile(rng, size, base=None):
    """A high-contrast tile: centered blob plus an off-center dot so the
    tile is asymmetric (seam mistakes cannot hide)."""
    h, w = size
    tile = np.full((h, w, 3), 40 if base is None else base, dtype=np.uint8)
    color = rng.integers(90, 256, size=3)
    cy, cx = h // 2, w // 2
    r = max(2, min(h, w) // 4)
    yy, xx = np.mgrid[0:h, 0:w]
    blob = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    tile[blob] = color
    tile[0, 0] = rng.integers(120, 256, size=3)
    tile[h - 1, 0] = rng.integers(120, 256, size=3)
    return tile


def tiled_image(tile, rows, cols):
    """Perfectly tiled RGB image; returns (image, centers, tile_shape)."""
    pixels = np.tile(tile, (rows, cols, 1))
    th, tw = tile.shape[:2]
    centers = [
        (c * tw + tw // 2, r * th + th // 2) for r in range(rows) for c in range(cols)
    ]
    return RasterImage(pixels), centers, (th, tw)


def grid_program(tile_shape, rows, cols, attribute=None):
    """Program whose draws sit at the centers of a rows x cols tiling."""
    th, tw = tile_shape
    return RegularityProgram(
        outer_range=(0, cols),
        inner_range=(0, rows),
        conditions=(),
        x_expr=LinearExpr(tw, 0, tw // 2),
        y_expr=LinearExpr(0, th, th // 2),
        attribute=attribute if attribute is not None else Constant(),
    )


def erase_rect(image, x0, y0, x1, y1):
    """Copy of image with [x0,x1) x [y0,y1) marked as holes."""
    mask = image.mask.copy()
    mask[y0:y1, x0:x1] = False
    pix = image.pixels.copy()
    pix[~mask] = 0
    return RasterImage(pix, mask)


# ------------------------------------------------------------- test oracles


def exhaustive_lattice_minimum(centroids, config):
    """Independent oracle for the lattice search: scan the entire
    canonical model space (spacings in bounds, centered shear, origin in
    the fundamental cell) with explicitly constructed point sets."""
    best = None
    w, h = centroids.image_bounds
    pts = centroids.as_array()
    for d_xi in range(config.spacing_min, config.spacing_max + 1):
        shears = sorted({s if 2 * s <= d_xi else s - d_xi for s in range(d_xi)})
        for d_yj in range(config.spacing_min, config.spacing_max + 1):
            for d_xj in shears:
                for b_x in range(d_xi):
                    for b_y in range(d_yj):
                        lattice = []
                        y = b_y
                        j = 0
                        while y <= h - 1:
                            off = b_x + j * d_xj
                            i = -(off // d_xi)
                            x = off + i * d_xi
                            while x <= w - 1:
                                lattice.append((x, y))
                                i += 1
                                x += d_xi
                            j += 1
                            y += d_yj
                        arr = np.asarray(lattice, dtype=float)
                        d2 = ((pts[:, None, :] - arr[None, :, :]) ** 2).sum(-1)
                        cost = d2.min(axis=1).sum() + config.lam * len(lattice)
                        if best is None or cost < best:
                            best = cost
    return best


def exhaustive_attribute_oracle(D, indices, config):
    """Independent scan of the full attribute-template space, scoring
    each candidate by direct dsl evaluation and naive pair loops."""
    from regsynth.synth import _enumerate_templates

    ii = [p[0] for p in indices]
    jj = [p[1] for p in indices]
    best = None
    for rank, template in enumerate(_enumerate_templates(config)):
        labels = [template.evaluate(i, j) for i, j in zip(ii, jj)]
        if min(labels) < 0:
            continue
        groups = len(set(labels))
        if groups > config.max_groups:
            continue
        cost = 0.0
        for p in range(len(labels)):
            for q in range(p + 1, len(labels)):
                sgn = 1.0 if labels[p] == labels[q] else -1.0
                cost += sgn * D[p, q]
        cost += config.mu * groups
        key = (cost, groups, rank)
        if best is None or key < best[0]:
            best = (key, template)
    return best[1]
