"""Points, assignment, convex hulls, and Voronoi partitioning.

Everything here is a pure function over immutable inputs; the synthesis
and manipulation modules call into these from parallel workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DomainError


class Point2(NamedTuple):
    """A pixel-space position; coordinates are real-valued and finite."""

    x: float
    y: float


class LatticeIndex(NamedTuple):
    """An (i, j) loop-variable pair."""

    i: int
    j: int


@dataclass(frozen=True)
class CentroidSet:
    """Detected object centers plus the image frame they live in.

    points       ordered centroid positions
    descriptors  optional per-point appearance vectors (same length)
    image_bounds (width, height) in pixels
    """

    points: tuple[Point2, ...]
    image_bounds: tuple[int, int]
    descriptors: Optional[tuple] = None

    def __post_init__(self):
        pts = tuple(Point2(float(p[0]), float(p[1])) for p in self.points)
        object.__setattr__(self, "points", pts)
        w, h = self.image_bounds
        if w <= 0 or h <= 0:
            raise DomainError("image bounds must be positive")
        for p in pts:
            if not (math.isfinite(p.x) and math.isfinite(p.y)):
                raise DomainError("non-finite centroid coordinate")
            if not (0 <= p.x < w and 0 <= p.y < h):
                raise DomainError(f"centroid {p} outside image bounds {w}x{h}")
        if self.descriptors is not None and len(self.descriptors) != len(pts):
            raise DomainError("descriptor count does not match point count")
        arr = np.asarray(pts, dtype=float)
        if len(pts) > 1:
            # duplicates (< 1 px apart) make matching and Voronoi ill-posed
            d2 = np.sum((arr[:, None, :] - arr[None, :, :]) ** 2, axis=-1)
            np.fill_diagonal(d2, np.inf)
            if d2.min() < 1.0:
                a, b = np.unravel_index(int(d2.argmin()), d2.shape)
                raise DomainError(f"duplicate centroids: {pts[a]} and {pts[b]}")

    def __len__(self):
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)


@dataclass(frozen=True)
class ConvexHull:
    """Hull of integer lattice indices.

    vertices    counter-clockwise, minimal (no collinear interior points)
    edges       inward inequalities a*i + b*j + c >= 0 with gcd(a, b) = 1
    degenerate  True when the input was a single point or collinear
    """

    vertices: tuple[LatticeIndex, ...]
    edges: tuple[tuple[int, int, int], ...]
    degenerate: bool = False

    def contains(self, p: LatticeIndex) -> bool:
        if self.degenerate:
            if len(self.vertices) == 1:
                return tuple(p) == tuple(self.vertices[0])
            (x0, y0), (x1, y1) = self.vertices
            cross = (x1 - x0) * (p[1] - y0) - (y1 - y0) * (p[0] - x0)
            if cross != 0:
                return False
            t0 = (p[0] - x0) * (x1 - x0) + (p[1] - y0) * (y1 - y0)
            t1 = (x1 - x0) ** 2 + (y1 - y0) ** 2
            return 0 <= t0 <= t1
        return all(a * p[0] + b * p[1] + c >= 0 for a, b, c in self.edges)


def min_cost_assignment(
    left: Sequence[Point2], right: Sequence[Point2]
) -> list[tuple[int, int]]:
    """Globally optimal one-to-one matching between two point sets.

    Minimizes the total squared Euclidean distance over min(|left|,
    |right|) pairs; exact (Hungarian-style), not greedy. Returns
    (left_index, right_index) pairs sorted by left index.
    """
    if len(left) == 0 or len(right) == 0:
        raise DomainError("empty point set")
    la = np.asarray(left, dtype=float)
    ra = np.asarray(right, dtype=float)
    cost = np.sum((la[:, None, :] - ra[None, :, :]) ** 2, axis=-1)
    rows, cols = linear_sum_assignment(cost)
    return sorted(zip(rows.tolist(), cols.tolist()))


def assignment_cost(
    left: Sequence[Point2], right: Sequence[Point2], pairs=None
) -> float:
    """Total squared distance of a matching (default: the optimal one)."""
    if pairs is None:
        pairs = min_cost_assignment(left, right)
    total = 0.0
    for li, ri in pairs:
        total += (left[li][0] - right[ri][0]) ** 2 + (left[li][1] - right[ri][1]) ** 2
    return total


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _edge_inequality(v0, v1):
    # inward halfplane of directed CCW edge v0 -> v1
    dx, dy = v1[0] - v0[0], v1[1] - v0[1]
    a, b = -dy, dx
    c = -(a * v0[0] + b * v0[1])
    g = math.gcd(abs(a), abs(b))
    return (a // g, b // g, c // g)


def convex_hull(points: Sequence[LatticeIndex]) -> ConvexHull:
    """Andrew monotone chain over integer indices; exact arithmetic.

    Collinear boundary points are excluded from the vertex list.
    Degenerate inputs (single point, all collinear) come back flagged,
    holding the containing point or segment endpoints.
    """
    if len(points) < 1:
        raise DomainError("empty point set")
    pts = sorted({(int(p[0]), int(p[1])) for p in points})
    if len(pts) == 1:
        v = (LatticeIndex(*pts[0]),)
        return ConvexHull(vertices=v, edges=(), degenerate=True)
    if all(_cross(pts[0], pts[-1], p) == 0 for p in pts):
        lo, hi = LatticeIndex(*pts[0]), LatticeIndex(*pts[-1])
        e = _edge_inequality(lo, hi)
        anti = (-e[0], -e[1], -e[2])
        return ConvexHull(vertices=(lo, hi), edges=(e, anti), degenerate=True)

    lower: list = []
    for p in pts:
        while len(lower) > 1 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) > 1 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    ring = lower[:-1] + upper[:-1]  # CCW, strictly convex
    verts = tuple(LatticeIndex(*p) for p in ring)
    edges = tuple(
        _edge_inequality(ring[k], ring[(k + 1) % len(ring)]) for k in range(len(ring))
    )
    return ConvexHull(vertices=verts, edges=edges, degenerate=False)


def voronoi_partition(centroids: CentroidSet) -> np.ndarray:
    """Label every pixel with the index of its nearest centroid.

    Euclidean distance on pixel coordinates; ties go to the lowest
    centroid index. Returns an int32 array of shape (height, width).
    """
    if len(centroids) == 0:
        raise DomainError("empty point set")
    w, h = centroids.image_bounds
    xs = np.arange(w, dtype=float)
    ys = np.arange(h, dtype=float)
    gx, gy = np.meshgrid(xs, ys)
    labels = np.zeros((h, w), dtype=np.int32)
    best = (gx - centroids.points[0].x) ** 2 + (gy - centroids.points[0].y) ** 2
    for idx, p in enumerate(centroids.points[1:], start=1):
        d2 = (gx - p.x) ** 2 + (gy - p.y) ** 2
        closer = d2 < best  # strict: ties keep the lower index
        labels[closer] = idx
        np.minimum(best, d2, out=best)
    return labels
