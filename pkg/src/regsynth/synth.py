"""Three-stage program search: lattice, boundary conditions, attributes.

Stage 1 fits a 5-tuple (b_x, b_y, d_xi, d_xj, d_yj) so that
``x = b_x + i*d_xi + j*d_xj`` and ``y = b_y + j*d_yj`` explain the
detected centroids, minimizing

    cost = sum over centroids of squared distance to the nearest
           generated lattice point  +  lam * |P|

where P is every lattice point inside the image frame, boundary
conditions ignored. Stage 2 matches P against the centroids, takes the
convex hull of the matched (i, j) indices, and turns axis-aligned hull
edges into loop bounds and the rest into If-conditions. Stage 3 scores
every attribute template (quotients, zero tests, congruences, and their
conjunctions) by

    sum over unordered pairs p != q of sgn(A(p), A(q)) * d(p, q)
      + mu * (number of distinct labels)

with sgn = +1 for same-label pairs and -1 otherwise, and d a normalized
mean-absolute patch difference in [0, 1]. The pair set is unordered
pairs without p = q; summing ordered pairs or including p = q shifts
every candidate's cost by the same affine factor and cannot change the
minimizer.

Candidate evaluation is vectorized and chunked; chunks may run on the
RS_THREADS worker pool. Reductions are min with a total tie-break
(lexicographically smallest tuple), so results never depend on worker
count or chunk order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from ._parallel import parallel_map
from .dsl import (
    AttributeExpr,
    Constant,
    IsZero,
    IsZeroBoth,
    LinearExpr,
    Modulo,
    ModuloBoth,
    Quotient,
    RegularityProgram,
)
from .errors import DomainError
from .geometry import CentroidSet, LatticeIndex, Point2, convex_hull, min_cost_assignment
from .raster import RasterImage


# ------------------------------------------------------------------- config


@dataclass(frozen=True)
class SynthConfig:
    """Search hyperparameters.

    lam        lattice regularization weight (cost per generated point)
    mu         attribute regularization weight (cost per distinct label)
    spacing_min/max   bounds on d_xi and d_yj in pixels
    max_groups        attribute templates with more observed groups are
                      rejected during the search
    coeff_range       attribute-template coefficients range over
                      [-coeff_range, coeff_range]
    modulus_range     inclusive (lo, hi) for divisors and moduli
    exhaustive_limit  lattice search enumerates the entire canonical
                      model space when it is at most this large;
                      otherwise displacement voting proposes candidates
    patch_window      patch half-size for attribute distances; None
                      derives it from the median neighbor spacing
    """

    lam: float = 5.0
    mu: float = 10.0
    spacing_min: int = 4
    spacing_max: int = 64
    max_groups: int = 8
    coeff_range: int = 3
    modulus_range: tuple[int, int] = (2, 5)
    exhaustive_limit: int = 200_000
    patch_window: Optional[int] = None

    def __post_init__(self):
        if self.lam <= 0 or self.mu <= 0:
            raise DomainError("regularization weights must be positive")
        if self.spacing_min < 2:
            raise DomainError("spacing_min must be >= 2")
        if self.spacing_min > self.spacing_max:
            raise DomainError("spacing_min exceeds spacing_max")


# -------------------------------------------------------------------- model


def _centered_mod(value: int, period: int) -> int:
    r = value % period
    if 2 * r > period:
        r -= period
    return r


@dataclass(frozen=True)
class LatticeModel:
    """The 5-tuple generating x = b_x + i*d_xi + j*d_xj, y = b_y + j*d_yj.

    d_xi and d_yj are at least 2 (minimum object spacing) and the shear
    satisfies |d_xj| < d_xi. canonical() additionally reduces the shear
    to the centered range and the origin to the fundamental cell, which
    makes the tuple unique for a given generated point set.
    """

    b_x: int
    b_y: int
    d_xi: int
    d_xj: int
    d_yj: int

    def __post_init__(self):
        for name in ("b_x", "b_y", "d_xi", "d_xj", "d_yj"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.d_xi < 2 or self.d_yj < 2:
            raise DomainError("lattice spacings must be >= 2")
        if abs(self.d_xj) >= self.d_xi:
            raise DomainError("shear must satisfy |d_xj| < d_xi")

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.b_x, self.b_y, self.d_xi, self.d_xj, self.d_yj)

    def canonical(self) -> "LatticeModel":
        d_xj = _centered_mod(self.d_xj, self.d_xi)
        q, b_y = divmod(self.b_y, self.d_yj)
        b_x = (self.b_x - q * d_xj) % self.d_xi
        return LatticeModel(b_x, b_y, self.d_xi, d_xj, self.d_yj)

    def position(self, i: int, j: int) -> Point2:
        return Point2(self.b_x + i * self.d_xi + j * self.d_xj, self.b_y + j * self.d_yj)

    def points_in(self, bounds: tuple[int, int]):
        """All in-frame lattice points: (positions (n,2), indices (n,2))."""
        w, h = bounds
        positions, indices = [], []
        j_lo = -((self.b_y) // self.d_yj)
        j_hi = (h - 1 - self.b_y) // self.d_yj
        for j in range(j_lo, j_hi + 1):
            y = self.b_y + j * self.d_yj
            off = self.b_x + j * self.d_xj
            i_lo = -(off // self.d_xi)
            i_hi = (w - 1 - off) // self.d_xi
            for i in range(i_lo, i_hi + 1):
                positions.append((off + i * self.d_xi, y))
                indices.append((i, j))
        return (
            np.asarray(positions, dtype=np.int64).reshape(-1, 2),
            np.asarray(indices, dtype=np.int64).reshape(-1, 2),
        )


# ---------------------------------------------------------- cost evaluation


def _batch_cost(models, pts, bounds, lam, row_window=None):
    """Lattice cost for a (M, 5) array of models against (N, 2) points.

    Exact integer-grade arithmetic in float64. With ``row_window`` set,
    only that many lattice rows around each point's nearest row are
    examined; exact for models that fit the points, and never an
    underestimate, so the true minimizer still ranks first as long as
    it is re-scored with row_window=None before being reported.
    """
    w, h = bounds
    models = np.asarray(models, dtype=np.int64)
    b_x = models[:, 0][:, None]
    b_y = models[:, 1][:, None]
    d_xi = models[:, 2][:, None]
    d_xj = models[:, 3][:, None]
    d_yj = models[:, 4][:, None]
    M = len(models)

    j_lo = -(b_y // d_yj)
    j_hi = (h - 1 - b_y) // d_yj

    # |P| over all in-frame rows
    r_full = int((j_hi - j_lo).max()) + 1
    j_grid = j_lo + np.arange(r_full, dtype=np.int64)[None, :]
    row_ok = j_grid <= j_hi
    off = b_x + j_grid * d_xj
    i_lo = -(off // d_xi)
    i_hi = (w - 1 - off) // d_xi
    counts = np.where(row_ok, np.maximum(0, i_hi - i_lo + 1), 0)
    p_count = counts.sum(axis=1)

    x = pts[:, 0][None, :, None]
    y = pts[:, 1][None, :, None]
    if row_window is None:
        rows = np.broadcast_to(j_grid[:, None, :], (M, len(pts), r_full))
        rows_ok = np.broadcast_to(row_ok[:, None, :], rows.shape)
    else:
        jc = np.rint((y - b_y[:, :, None]) / d_yj[:, :, None]).astype(np.int64)
        offsets = np.arange(-row_window, row_window + 1, dtype=np.int64)
        rows = jc + offsets[None, None, :]
        rows = np.clip(rows, j_lo[:, :, None], j_hi[:, :, None])
        rows_ok = np.ones(rows.shape, dtype=bool)

    v = b_y[:, :, None] + rows * d_yj[:, :, None]
    o = b_x[:, :, None] + rows * d_xj[:, :, None]
    ri_lo = -(o // d_xi[:, :, None])
    ri_hi = (w - 1 - o) // d_xi[:, :, None]
    rows_ok = rows_ok & (ri_hi >= ri_lo)
    iq = np.rint((x - o) / d_xi[:, :, None])
    iq = np.clip(iq, ri_lo, ri_hi)
    u = o + iq * d_xi[:, :, None]
    d2 = (x - u) ** 2 + (y - v) ** 2
    d2 = np.where(rows_ok, d2, np.inf)
    data = d2.min(axis=2).sum(axis=1)
    return data + lam * p_count


def lattice_cost(centroids: CentroidSet, model: LatticeModel, lam: float) -> float:
    """Exact cost of one model: nearest-point residuals plus lam * |P|."""
    pts = centroids.as_array()
    return float(
        _batch_cost(
            np.asarray([model.as_tuple()]), pts, centroids.image_bounds, lam
        )[0]
    )


# ------------------------------------------------------------ lattice search


def _canonical_model_space(config: SynthConfig):
    """Sizes of the full canonical search space per (d_xi, d_yj) block."""
    lo, hi = config.spacing_min, config.spacing_max
    blocks = []
    total = 0
    for d_xi in range(lo, hi + 1):
        for d_yj in range(lo, hi + 1):
            blocks.append((d_xi, d_yj))
            total += d_xi * d_yj * d_xi  # origins times centered shear classes
    return total, blocks


def _enumerate_block(d_xi, d_yj):
    shears = sorted(_centered_mod(s, d_xi) for s in range(d_xi))
    bx = np.arange(d_xi, dtype=np.int64)
    by = np.arange(d_yj, dtype=np.int64)
    g = np.stack(np.meshgrid(bx, by, np.asarray(shears, dtype=np.int64), indexing="ij"), -1)
    g = g.reshape(-1, 3)
    out = np.empty((len(g), 5), dtype=np.int64)
    out[:, 0] = g[:, 0]
    out[:, 1] = g[:, 1]
    out[:, 2] = d_xi
    out[:, 3] = g[:, 2]
    out[:, 4] = d_yj
    return out


def _argmin_lex(models, costs):
    """Index of the minimum cost; ties resolved by smallest 5-tuple."""
    best = costs.min()
    tie = np.flatnonzero(costs == best)
    cols = models[tie]
    order = np.lexsort((cols[:, 4], cols[:, 3], cols[:, 2], cols[:, 1], cols[:, 0]))
    return tie[order[0]], best


def _chunk_size(n_points, bounds, row_window, budget=3_000_000):
    if row_window is None:
        rows = bounds[1] // 2 + 1  # worst case d_yj = 2
    else:
        rows = 2 * row_window + 1
    return int(np.clip(budget // max(1, n_points * rows), 16, 4096))


def _score_all(models, pts, bounds, lam, row_window):
    """Costs for every model, chunked and parallelizable; concatenation
    preserves model order so results are worker-count independent."""
    chunk = _chunk_size(len(pts), bounds, row_window)
    pieces = [models[k : k + chunk] for k in range(0, len(models), chunk)]

    def score(piece):
        return _batch_cost(piece, pts, bounds, lam, row_window=row_window)

    return np.concatenate(parallel_map(score, pieces))


def _score_chunked(models, pts, bounds, lam, row_window):
    """Best (model row, cost) under the lexicographic tie-break."""
    chunk = _chunk_size(len(pts), bounds, row_window)
    pieces = [models[k : k + chunk] for k in range(0, len(models), chunk)]

    def score(piece):
        costs = _batch_cost(piece, pts, bounds, lam, row_window=row_window)
        idx, best = _argmin_lex(piece, costs)
        return piece[idx], best

    results = parallel_map(score, pieces)
    rows = np.asarray([r[0] for r in results])
    costs = np.asarray([r[1] for r in results])
    idx, best = _argmin_lex(rows, costs)
    return rows[idx], best


def _antipodal_clusters(vectors, base_tol=3.0, rel_tol=0.3):
    """Greedy clustering identifying v with -v; returns (center, count)
    sorted by count descending, deterministically."""
    centers: list[np.ndarray] = []
    counts: list[int] = []
    sums: list[np.ndarray] = []
    for v in vectors:
        placed = False
        for k in range(len(centers)):
            c = centers[k]
            tol = max(base_tol, rel_tol * float(np.hypot(*c)))
            dp = np.hypot(*(v - c))
            dm = np.hypot(*(v + c))
            if min(dp, dm) <= tol:
                sums[k] = sums[k] + (v if dp <= dm else -v)
                counts[k] += 1
                centers[k] = sums[k] / counts[k]
                placed = True
                break
        if not placed:
            centers.append(v.astype(float))
            counts.append(1)
            sums.append(v.astype(float))
    order = sorted(range(len(centers)), key=lambda k: (-counts[k], k))
    return [(centers[k], counts[k]) for k in order]


def _circular_mode(residues, period, halfwidth=2):
    """Mode of residues on the circle [0, period), refined by a local
    circular mean and rounded to an integer."""
    bins = np.bincount(np.rint(residues).astype(np.int64) % period, minlength=period)
    smoothed = sum(np.roll(bins, s) for s in range(-halfwidth, halfwidth + 1))
    center = int(smoothed.argmax())
    delta = (residues - center + period / 2.0) % period - period / 2.0
    near = np.abs(delta) <= halfwidth + 1
    if near.any():
        center = int(round(center + float(delta[near].mean())))
    return center % period


def _origin_for(pts, d_xi, d_xj, d_yj):
    ys = pts[:, 1]
    b_y = _circular_mode(ys % d_yj, d_yj)
    j = np.rint((ys - b_y) / d_yj)
    b_x = _circular_mode((pts[:, 0] - j * d_xj) % d_xi, d_xi)
    return b_x, b_y


def _row_structure_triples(pts, d_yj, smin, smax):
    """(d_xi, d_xj) candidates from within-row x gaps and row-to-row
    phase drift; catches lattices whose horizontal step is too long to
    appear among nearest-neighbor displacements."""
    ys = pts[:, 1]
    b_y = _circular_mode(ys % d_yj, d_yj)
    j = np.rint((ys - b_y) / d_yj).astype(np.int64)
    rows: dict[int, list[float]] = {}
    for (x, _y), jj in zip(pts, j):
        rows.setdefault(int(jj), []).append(float(x))
    gaps = []
    for xs in rows.values():
        xs = sorted(xs)
        gaps.extend(b - a for a, b in zip(xs, xs[1:]))
    if not gaps:
        return []
    clusters = _antipodal_clusters([np.asarray([g, 0.0]) for g in sorted(gaps)])
    out = []
    for center, _count in clusters[:4]:
        d_xi = int(round(abs(center[0])))
        if not (max(2, smin) <= d_xi <= smax):
            continue
        # per-row x phase, then the consecutive-row drift = shear
        phases = {
            jj: _circular_mode(np.asarray(xs) % d_xi, d_xi)
            for jj, xs in rows.items()
        }
        drifts = [
            _centered_mod(int(phases[b]) - int(phases[a]), d_xi)
            for a, b in zip(sorted(phases), sorted(phases)[1:])
            if b - a == 1
        ]
        if drifts:
            vals, counts = np.unique(drifts, return_counts=True)
            d_xj = int(vals[np.argmax(counts)])
        else:
            d_xj = 0
        out.append((d_xi, _centered_mod(d_xj, d_xi), int(d_yj)))
    return out


def _heuristic_candidates(pts, config: SynthConfig, bounds, lam):
    """Displacement-voting seeds plus local refinement around the best."""
    smin, smax = config.spacing_min, config.spacing_max
    n = len(pts)
    k = min(8, n - 1)
    tree = cKDTree(pts)
    _, nbrs = tree.query(pts, k=k + 1)
    vecs = (pts[nbrs[:, 1:]] - pts[:, None, :]).reshape(-1, 2)
    if len(vecs) > 2400:  # clustering is quadratic-ish; votes stay plentiful
        vecs = vecs[:: int(np.ceil(len(vecs) / 2400))]
    clusters = _antipodal_clusters(vecs)

    i_cands: list[int] = []
    j_cands: list[tuple[int, int]] = []
    for center, _count in clusters:
        cx, cy = center
        if abs(cy) <= 2.5 and smin - 2 <= abs(cx) <= smax + 2:
            d = int(round(abs(cx)))
            if d not in i_cands:
                i_cands.append(d)
        flipped = center if cy > 0 or (cy == 0 and cx > 0) else -center
        fx, fy = flipped
        if smin - 2 <= fy <= smax + 2:
            cand = (int(round(fx)), int(round(fy)))
            if cand not in j_cands:
                j_cands.append(cand)
    i_cands = i_cands[:8]
    j_cands = j_cands[:12]
    if not i_cands:
        # fall back to the x-extent of any cluster
        for center, _count in clusters:
            d = int(round(abs(center[0])))
            if smin <= d <= smax and d not in i_cands:
                i_cands.append(d)
        i_cands = i_cands[:8]
    if not j_cands:
        j_cands = [(0, d) for d in dict.fromkeys([smax, max(smin, (smin + smax) // 2)])]
    triples = []
    for d_xi in i_cands:
        d_xi = min(max(d_xi, smin), smax)
        for d_xj_raw, d_yj in j_cands:
            d_yj = min(max(d_yj, smin), smax)
            triples.append((d_xi, _centered_mod(d_xj_raw, d_xi), d_yj))
    # long horizontal steps never reach the kNN votes; row structure does
    for _, d_yj in j_cands:
        d_yj = min(max(d_yj, smin), smax)
        triples.extend(_row_structure_triples(pts, d_yj, smin, smax))
    if not triples:
        raise DomainError("no lattice found")

    seeds = []
    for d_xi, d_xj, d_yj in dict.fromkeys(triples):
        b_x, b_y = _origin_for(pts, d_xi, d_xj, d_yj)
        seeds.append((b_x, b_y, d_xi, d_xj, d_yj))
    seeds = np.asarray(sorted(set(seeds)), dtype=np.int64)

    # rank on a deterministic point subsample; exact re-scoring happens
    # on the finalists in lattice_search
    if len(pts) > 900:
        stride = int(np.ceil(len(pts) / 900))
        rank_pts = pts[::stride]
    else:
        rank_pts = pts
    costs = _score_all(seeds, rank_pts, bounds, lam, row_window=2)
    top = seeds[np.argsort(costs, kind="stable")[:3]]

    # refine the spacings +-2; the matching origin is re-derived per
    # triple (a changed shear moves it further than any fixed wiggle)
    # and then wiggled +-1
    refined = set()
    deltas = range(-2, 3)
    for _bx, _by, d_xi, d_xj, d_yj in map(tuple, top):
        for da in deltas:
            dxi = d_xi + da
            if not (max(2, smin) <= dxi <= smax):
                continue
            for db in deltas:
                dyj = d_yj + db
                if not (max(2, smin) <= dyj <= smax):
                    continue
                for dc in deltas:
                    dxj = _centered_mod(d_xj + dc, dxi)
                    b_x, b_y = _origin_for(pts, dxi, dxj, dyj)
                    for dd in (-1, 0, 1):
                        for de in (-1, 0, 1):
                            refined.add(
                                ((b_x + dd) % dxi, (b_y + de) % dyj, dxi, dxj, dyj)
                            )
    return np.asarray(sorted(refined), dtype=np.int64), rank_pts


def lattice_search(
    centroids: CentroidSet, config: SynthConfig | None = None
) -> tuple[LatticeModel, float]:
    """Find the canonical 5-tuple minimizing the lattice cost.

    Enumerates the entire canonical model space (spacings within the
    configured bounds, centered shear, origin inside the fundamental
    cell) when it fits the exhaustive budget; otherwise candidate models
    come from nearest-neighbor displacement voting refined +-2 around
    the best seeds. Ties break toward the lexicographically smallest
    (b_x, b_y, d_xi, d_xj, d_yj).
    """
    config = config or SynthConfig()
    if len(centroids) < 4:
        raise DomainError("insufficient centroids")
    pts = centroids.as_array()
    bounds = centroids.image_bounds
    if config.spacing_min > min(bounds):
        raise DomainError("no lattice found")

    total, blocks = _canonical_model_space(config)
    if total <= config.exhaustive_limit:
        pieces = [_enumerate_block(a, b) for a, b in blocks]
        models = np.concatenate(pieces, axis=0)
        row, best = _score_chunked(models, pts, bounds, config.lam, row_window=None)
        model = LatticeModel(*map(int, row))
        return model.canonical(), float(best)

    candidates, rank_pts = _heuristic_candidates(pts, config, bounds, config.lam)
    if len(candidates) == 0:
        raise DomainError("no lattice found")
    costs = _score_all(candidates, rank_pts, bounds, config.lam, row_window=3)
    order = np.argsort(costs, kind="stable")[: min(50, len(candidates))]
    finalists = candidates[order]
    row, best = _score_chunked(finalists, pts, bounds, config.lam, row_window=None)
    model = LatticeModel(*map(int, row))
    return model.canonical(), float(best)


# ---------------------------------------------------------------- matching


class LatticeMatch(NamedTuple):
    """Matched centroids: aligned lists plus the dropped outliers."""

    centroid_indices: list[int]
    lattice_indices: list[LatticeIndex]
    residuals: list[float]
    dropped: list[int]


def match_to_lattice(centroids: CentroidSet, model: LatticeModel) -> LatticeMatch:
    """Assign centroids to generated lattice points (exact min-cost
    matching); centroids farther than half a lattice period from their
    assigned point are dropped as detector outliers."""
    positions, indices = model.points_in(centroids.image_bounds)
    if len(positions) == 0:
        raise DomainError("no lattice found")
    left = [Point2(float(x), float(y)) for x, y in centroids.as_array()]
    right = [Point2(float(x), float(y)) for x, y in positions]
    pairs = min_cost_assignment(left, right)
    half_period = min(model.d_xi, model.d_yj) / 2.0
    limit = half_period * half_period
    out = LatticeMatch([], [], [], [])
    for ci, pi in pairs:
        r2 = (left[ci].x - right[pi].x) ** 2 + (left[ci].y - right[pi].y) ** 2
        if r2 > limit:
            out.dropped.append(ci)
            continue
        out.centroid_indices.append(ci)
        out.lattice_indices.append(LatticeIndex(int(indices[pi][0]), int(indices[pi][1])))
        out.residuals.append(r2)
    matched = set(out.centroid_indices) | set(out.dropped)
    out.dropped.extend(k for k in range(len(left)) if k not in matched)
    out.dropped.sort()
    return out


# ----------------------------------------------------------- condition search


class ConditionResult(NamedTuple):
    outer_range: tuple[int, int]
    inner_range: tuple[int, int]
    conditions: tuple[LinearExpr, ...]
    degenerate: bool
    dropped: tuple[int, ...]


def condition_search(centroids: CentroidSet, model: LatticeModel) -> ConditionResult:
    """Loop ranges and If-conditions from the hull of matched indices.

    Axis-aligned hull edges become the range bounds; every other edge
    becomes a condition. Collinear matches yield single-row/column
    ranges with the degenerate flag set.
    """
    match = match_to_lattice(centroids, model)
    if not match.lattice_indices:
        raise DomainError("no centroids matched the lattice")
    idx = match.lattice_indices
    hull = convex_hull(idx)
    is_ = [p.i for p in idx]
    js = [p.j for p in idx]
    outer = (min(is_), max(is_) + 1)
    inner = (min(js), max(js) + 1)
    conditions = []
    if hull.degenerate:
        if len(hull.vertices) == 2:
            (a, b, c) = hull.edges[0]
            if a != 0 and b != 0:  # slanted segment: pin both sides of the line
                conditions = [LinearExpr(a, b, c), LinearExpr(-a, -b, -c)]
        return ConditionResult(
            outer, inner, tuple(conditions), True, tuple(match.dropped)
        )
    for a, b, c in hull.edges:
        if a == 0 or b == 0:
            continue  # axis-aligned: already expressed by the loop ranges
        conditions.append(LinearExpr(a, b, c))
    conditions.sort(key=lambda e: (e.coef_i, e.coef_j, e.constant))
    return ConditionResult(outer, inner, tuple(conditions), False, tuple(match.dropped))


# ----------------------------------------------------------- attribute search


@dataclass(frozen=True)
class PatchDistance:
    """Mean absolute per-channel difference over square patches,
    normalized to [0, 1]. Symmetric, zero on identical patches."""

    window: int

    def matrix(self, image: RasterImage, points: Sequence[Point2]) -> np.ndarray:
        w = self.window
        size = 2 * w + 1
        n = len(points)
        patches = np.zeros((n, size, size, 3), dtype=np.float64)
        valid = np.zeros((n, size, size), dtype=bool)
        px = image.pixels.astype(np.float64)
        for k, p in enumerate(points):
            cx, cy = int(round(p[0])), int(round(p[1]))
            x0, x1 = cx - w, cx + w + 1
            y0, y1 = cy - w, cy + w + 1
            sx0, sy0 = max(0, x0), max(0, y0)
            sx1, sy1 = min(image.width, x1), min(image.height, y1)
            if sx0 >= sx1 or sy0 >= sy1:
                continue
            ox, oy = sx0 - x0, sy0 - y0
            patches[k, oy : oy + sy1 - sy0, ox : ox + sx1 - sx0] = px[sy0:sy1, sx0:sx1]
            valid[k, oy : oy + sy1 - sy0, ox : ox + sx1 - sx0] = image.mask[
                sy0:sy1, sx0:sx1
            ]
        flat_p = patches.reshape(n, -1, 3)
        flat_v = valid.reshape(n, -1)
        out = np.zeros((n, n), dtype=np.float64)
        for a in range(n):
            diff = np.abs(flat_p[a][None, :, :] - flat_p).mean(axis=2)
            both = flat_v[a][None, :] & flat_v
            counts = both.sum(axis=1)
            sums = (diff * both).sum(axis=1)
            row = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
            out[a] = row / 255.0
        np.fill_diagonal(out, 0.0)
        return out


def _coeff_grid(bound):
    vals = range(-bound, bound + 1)
    return [(a, b, c) for a in vals for b in vals for c in vals]


def _congruence_classes(bound, modulus):
    """Distinct (a, b, c) mod m classes reachable from the coefficient
    grid, each keyed by a canonical in-grid representative."""
    reps = {}
    for a, b, c in _coeff_grid(bound):
        key = (a % modulus, b % modulus, c % modulus)
        rep = tuple(v if v <= bound else v - modulus for v in key)
        reps.setdefault(key, rep)
    return sorted(reps.values())


def _gcd_classes(bound):
    """Zero-set representatives: gcd-reduced, sign-normalized exprs."""
    import math

    reps = set()
    for a, b, c in _coeff_grid(bound):
        g = math.gcd(math.gcd(abs(a), abs(b)), abs(c))
        if g == 0:
            reps.add((0, 0, 0))
            continue
        a2, b2, c2 = a // g, b // g, c // g
        lead = next((v for v in (a2, b2, c2) if v != 0), 0)
        if lead < 0:
            a2, b2, c2 = -a2, -b2, -c2
        reps.add((a2, b2, c2))
    return sorted(reps)


def _enumerate_templates(config: SynthConfig):
    """Canonical template order: Constant, Quotient, IsZero, Modulo,
    IsZeroBoth, ModuloBoth; parameters ascending within each variant."""
    bound = config.coeff_range
    mlo, mhi = config.modulus_range
    templates: list[AttributeExpr] = [Constant()]
    for d in range(mlo, mhi + 1):
        for a, b, c in _coeff_grid(bound):
            templates.append(Quotient(LinearExpr(a, b, c), d))
    zero_reps = _gcd_classes(bound)
    for a, b, c in zero_reps:
        templates.append(IsZero(LinearExpr(a, b, c)))
    mod_reps = {m: _congruence_classes(bound, m) for m in range(mlo, mhi + 1)}
    for m in range(mlo, mhi + 1):
        for a, b, c in mod_reps[m]:
            templates.append(Modulo(LinearExpr(a, b, c), m))
    for p in range(len(zero_reps)):
        for q in range(p, len(zero_reps)):
            templates.append(
                IsZeroBoth(LinearExpr(*zero_reps[p]), LinearExpr(*zero_reps[q]))
            )
    pairs = [
        (m, rep) for m in range(mlo, mhi + 1) for rep in mod_reps[m]
    ]
    for p in range(len(pairs)):
        for q in range(p, len(pairs)):
            (m1, e1), (m2, e2) = pairs[p], pairs[q]
            templates.append(ModuloBoth(LinearExpr(*e1), m1, LinearExpr(*e2), m2))
    return templates


def _template_labels(template: AttributeExpr, ii, jj):
    if isinstance(template, Quotient):
        raw = template.expr.coef_i * ii + template.expr.coef_j * jj + template.expr.constant
        if (raw < 0).any():
            return None  # synthesis-time rejection: clamped labels
        return raw // template.divisor
    return np.asarray([template.evaluate(int(i), int(j)) for i, j in zip(ii, jj)])


def attribute_expr_cost(labels, dist_matrix, mu):
    """Pairwise appearance cost of a labeling (unordered pairs, p != q)."""
    same = labels[:, None] == labels[None, :]
    signed = np.where(same, dist_matrix, -dist_matrix)
    total = signed.sum() / 2.0
    return total + mu * len(np.unique(labels))


def _attribute_search_scored(centroids, image, indices, config, dist):
    if len(indices) != len(centroids):
        raise DomainError("indices must align with centroids")
    if dist is None:
        dist = PatchDistance(window=_default_window(centroids))
    D = dist.matrix(image, centroids.points)
    ii = np.asarray([p[0] for p in indices], dtype=np.int64)
    jj = np.asarray([p[1] for p in indices], dtype=np.int64)

    templates = _enumerate_templates(config)

    def score(rank_and_template):
        rank, template = rank_and_template
        labels = _template_labels(template, ii, jj)
        if labels is None:
            return None
        groups = len(np.unique(labels))
        if groups > config.max_groups:
            return None
        cost = attribute_expr_cost(labels, D, config.mu)
        return (cost, groups, rank)

    scored = parallel_map(score, list(enumerate(templates)))
    best_key = None
    for entry in scored:
        if entry is not None and (best_key is None or entry < best_key):
            best_key = entry
    return templates[best_key[2]], float(best_key[0])


def attribute_search(
    centroids: CentroidSet,
    image: RasterImage,
    indices: Sequence[LatticeIndex],
    config: SynthConfig | None = None,
    dist: PatchDistance | None = None,
) -> AttributeExpr:
    """Best attribute template for the matched objects.

    ``indices[k]`` is the lattice index matched to ``centroids.points[k]``.
    The patch-distance matrix is computed once and shared by every
    candidate; ties prefer fewer groups, then the canonical template
    order. Constant(0) is always a candidate, so the search cannot fail.
    """
    return _attribute_search_scored(centroids, image, indices, config or SynthConfig(), dist)[0]


def _default_window(centroids: CentroidSet) -> int:
    pts = centroids.as_array()
    if len(pts) < 2:
        return 4
    tree = cKDTree(pts)
    d, _ = tree.query(pts, k=2)
    return max(1, int(round(float(np.median(d[:, 1])) / 2.0)))


# ----------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class SynthReport:
    """A synthesized program plus the per-stage costs behind it."""

    program: RegularityProgram
    model: LatticeModel
    lattice_cost: float
    attribute_cost: Optional[float]
    degenerate: bool
    dropped: tuple[int, ...]


def synthesize_report(
    centroids: CentroidSet,
    image: Optional[RasterImage] = None,
    config: SynthConfig | None = None,
) -> SynthReport:
    """synthesize() with the stage costs exposed (for run manifests)."""
    config = config or SynthConfig()
    model, cost = lattice_search(centroids, config)
    cond = condition_search(centroids, model)

    attribute: AttributeExpr = Constant()
    attr_cost: Optional[float] = None
    if image is not None:
        match = match_to_lattice(centroids, model)
        pts = [centroids.points[k] for k in match.centroid_indices]
        subset = CentroidSet(points=tuple(pts), image_bounds=centroids.image_bounds)
        window = config.patch_window
        dist = PatchDistance(window=window) if window else None
        attribute, attr_cost = _attribute_search_scored(
            subset, image, match.lattice_indices, config, dist
        )

    program = RegularityProgram(
        outer_range=cond.outer_range,
        inner_range=cond.inner_range,
        conditions=cond.conditions,
        x_expr=LinearExpr(model.d_xi, model.d_xj, model.b_x),
        y_expr=LinearExpr(0, model.d_yj, model.b_y),
        attribute=attribute,
    )
    return SynthReport(
        program=program,
        model=model,
        lattice_cost=cost,
        attribute_cost=attr_cost,
        degenerate=cond.degenerate,
        dropped=cond.dropped,
    )


def synthesize(
    centroids: CentroidSet,
    image: Optional[RasterImage] = None,
    config: SynthConfig | None = None,
) -> RegularityProgram:
    """Compose the three searches into a program.

    Without an image the attribute is Constant(0). Deterministic for a
    fixed configuration.
    """
    return synthesize_report(centroids, image, config).program


def model_from_program(program: RegularityProgram) -> LatticeModel:
    """The 5-tuple embedded in a program's coordinate expressions."""
    return LatticeModel(
        b_x=program.x_expr.constant,
        b_y=program.y_expr.constant,
        d_xi=program.x_expr.coef_i,
        d_xj=program.x_expr.coef_j,
        d_yj=program.y_expr.coef_j,
    )
