"""Repeated-object detection: response-map peaks and displacement voting.

Feature maps are hand-crafted (gradient magnitude plus a per-channel
blur pyramid). Local maxima of each map form a peakmap; nearest-neighbor
displacements between peaks vote for the lattice's generating vectors;
the two dominant non-collinear vote vectors seed a lattice that the
peaks are snapped onto, one emitted centroid per occupied lattice cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import DomainError
from .geometry import CentroidSet, Point2
from .raster import RasterImage
from .synth import _antipodal_clusters


@dataclass(frozen=True)
class PeakMap:
    """Strict local maxima of one response map: (x, y, strength) rows,
    maxima within ``radius`` pixels, strengths above the threshold."""

    name: str
    radius: int
    peaks: tuple[tuple[float, float, float], ...]


@dataclass(frozen=True)
class DisplacementVote:
    """A binned displacement and its vote count; the vector is
    canonicalized into the half-plane dx > 0 (or dx == 0, dy > 0)."""

    vector: tuple[float, float]
    count: int


def canonical_vote_vector(v) -> tuple[float, float]:
    dx, dy = float(v[0]), float(v[1])
    if dx < 0 or (dx == 0 and dy < 0):
        dx, dy = -dx, -dy
    return (dx, dy)


def accumulate_votes(vectors, bin_size: float = 2.0) -> list[DisplacementVote]:
    """Cluster displacements, identifying v with -v, and count votes."""
    clusters = _antipodal_clusters(
        [np.asarray(v, dtype=float) for v in vectors], base_tol=max(2.0, bin_size)
    )
    votes = [
        DisplacementVote(vector=canonical_vote_vector(center), count=count)
        for center, count in clusters
    ]
    votes.sort(key=lambda v: (-v.count, v.vector))
    return votes


def extract_peaks(
    response: np.ndarray, radius: int, threshold: float | None = None, name: str = ""
) -> PeakMap:
    """Strict local maxima within ``radius``; default threshold is
    mean + 0.5 std of the map."""
    footprint = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    footprint[radius, radius] = False
    neighborhood_max = ndimage.maximum_filter(
        response, footprint=footprint, mode="constant", cval=-np.inf
    )
    if threshold is None:
        threshold = float(response.mean() + 0.5 * response.std())
    mask = (response > neighborhood_max) & (response > threshold)
    ys, xs = np.nonzero(mask)
    peaks = tuple(
        (float(x), float(y), float(response[y, x])) for x, y in zip(xs.tolist(), ys.tolist())
    )
    return PeakMap(name=name, radius=radius, peaks=peaks)


def _response_maps(image: RasterImage):
    px = image.pixels.astype(np.float64)
    gray = px @ np.asarray([0.299, 0.587, 0.114])
    smooth = ndimage.gaussian_filter(gray, 1.0)
    grad = np.hypot(ndimage.sobel(smooth, axis=0), ndimage.sobel(smooth, axis=1))
    maps = [("grad", grad)]
    for sigma in (2.0, 4.0):
        for ch, label in enumerate("rgb"):
            maps.append((f"{label}{int(sigma)}", ndimage.gaussian_filter(px[:, :, ch], sigma)))
    out = []
    for name, m in maps:
        span = m.max() - m.min()
        if span <= 1e-9:
            continue  # uniform response carries no repetition signal
        out.append((name, (m - m.min()) / span))
    return out


def _angle_between(v1, v2) -> float:
    """Acute angle between undirected vectors, degrees."""
    a1 = math.atan2(v1[1], v1[0]) % math.pi
    a2 = math.atan2(v2[1], v2[0]) % math.pi
    d = abs(a1 - a2)
    return math.degrees(min(d, math.pi - d))


def detect_centroids(
    image: RasterImage,
    peak_radius: int | None = None,
    vote_bin: float = 2.0,
    min_votes: int = 4,
    snap_tolerance: float = 0.35,
) -> CentroidSet:
    """Detect repeated-object centroids on a lattice pattern.

    Raises "no dominant displacement" when the vote histogram has no
    bin with at least ``min_votes`` votes or no second non-collinear
    direction (uniform images have no peaks at all).
    """
    w, h = image.bounds
    if w < 32 or h < 32:
        raise DomainError("image too small: detection needs at least 32x32")
    if peak_radius is None:
        peak_radius = max(3, min(w, h) // 32)

    peakmaps = [
        extract_peaks(m, radius=peak_radius, name=name)
        for name, m in _response_maps(image)
    ]
    vectors = []
    for pm in peakmaps:
        pts = np.asarray([(x, y) for x, y, _ in pm.peaks], dtype=float)
        if len(pts) < 2:
            continue
        k = min(6, len(pts) - 1)
        tree = cKDTree(pts)
        _, nbrs = tree.query(pts, k=k + 1)
        vecs = (pts[nbrs[:, 1:]] - pts[:, None, :]).reshape(-1, 2)
        vectors.extend(vecs)
    if not vectors:
        raise DomainError("no dominant displacement")

    votes = [v for v in accumulate_votes(vectors, vote_bin) if np.hypot(*v.vector) >= 2.0]
    if not votes or votes[0].count < min_votes:
        raise DomainError("no dominant displacement")
    v1 = votes[0]
    v2 = next(
        (v for v in votes[1:] if _angle_between(v1.vector, v.vector) >= 15.0), None
    )
    if v2 is None or v2.count < 2:
        raise DomainError("no dominant displacement")

    basis = np.asarray(
        [[v1.vector[0], v2.vector[0]], [v1.vector[1], v2.vector[1]]], dtype=float
    )
    inv = np.linalg.inv(basis)

    all_peaks = [(x, y, s) for pm in peakmaps for x, y, s in pm.peaks]
    all_peaks.sort(key=lambda p: (-p[2], p[1], p[0]))
    anchor = np.asarray(all_peaks[0][:2])
    snap_limit = snap_tolerance * min(np.hypot(*v1.vector), np.hypot(*v2.vector))

    buckets: dict[tuple[int, int], list] = {}
    for x, y, s in all_peaks:
        rel = np.asarray([x, y]) - anchor
        ab = inv @ rel
        idx = (int(round(ab[0])), int(round(ab[1])))
        residual = rel - basis @ np.asarray(idx, dtype=float)
        if np.hypot(*residual) > snap_limit:
            continue
        buckets.setdefault(idx, []).append((x, y, s))

    centroids = []
    for idx in sorted(buckets):
        members = buckets[idx]
        wsum = sum(s for _, _, s in members)
        cx = sum(x * s for x, _, s in members) / wsum
        cy = sum(y * s for _, y, s in members) / wsum
        cx = min(max(cx, 0.0), w - 1.0)
        cy = min(max(cy, 0.0), h - 1.0)
        if all((cx - px) ** 2 + (cy - py) ** 2 >= 1.0 for px, py in centroids):
            centroids.append((cx, cy))
    if not centroids:
        raise DomainError("no dominant displacement")
    return CentroidSet(
        points=tuple(Point2(x, y) for x, y in centroids), image_bounds=(w, h)
    )
