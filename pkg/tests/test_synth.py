import numpy as np
import pytest

from regsynth.dsl import Constant, LinearExpr, Modulo, RegularityProgram, execute
from regsynth.errors import DomainError
from regsynth.geometry import LatticeIndex, Point2
from regsynth.raster import RasterImage
from regsynth.synth import (
    LatticeModel,
    PatchDistance,
    SynthConfig,
    attribute_expr_cost,
    attribute_search,
    condition_search,
    lattice_cost,
    lattice_search,
    match_to_lattice,
    model_from_program,
    synthesize,
)

from util import (
    centroid_set,
    exhaustive_attribute_oracle,
    exhaustive_lattice_minimum,
    lattice_points,
    rect_region,
)


# ------------------------------------------------------------------ oracles


def naive_lattice_cost(centroids, model, lam):
    """Independent double-loop evaluation of the lattice cost."""
    w, h = centroids.image_bounds
    points = []
    j = -(model.b_y // model.d_yj)
    while model.b_y + j * model.d_yj <= h - 1:
        y = model.b_y + j * model.d_yj
        if y >= 0:
            off = model.b_x + j * model.d_xj
            i = -(off // model.d_xi)
            while off + i * model.d_xi <= w - 1:
                x = off + i * model.d_xi
                if x >= 0:
                    points.append((x, y))
                i += 1
        j += 1
    total = 0.0
    for c in centroids.points:
        total += min((c.x - u) ** 2 + (c.y - v) ** 2 for u, v in points)
    return total + lam * len(points)


# -------------------------------------------------------------- lattice cost


def perfect_grid(spacing=10, n=3, bounds=(21, 21)):
    pts = [(i * spacing, j * spacing) for i in range(n) for j in range(n)]
    return centroid_set(pts, bounds)


def test_lattice_cost_perfect_grid():
    cs = perfect_grid()
    model = LatticeModel(0, 0, 10, 0, 10)
    assert lattice_cost(cs, model, 5.0) == 45.0  # data 0 + 5 * 9 points


def test_lattice_cost_jittered_grid():
    # in-bounds integer offsets with squared sum 12; residuals just add
    offsets = [(0, 0), (1, 1), (1, -1), (1, 1), (-1, -1), (1, -1), (-1, 1), (0, 0), (0, 0)]
    base = [(i * 10, j * 10) for i in range(3) for j in range(3)]
    pts = [(x + dx, y + dy) for (x, y), (dx, dy) in zip(base, offsets)]
    cs = centroid_set(pts, (21, 21))
    model = LatticeModel(0, 0, 10, 0, 10)
    assert lattice_cost(cs, model, 5.0) == 57.0  # 12 + 45


def sample_separated(rng, count, w, h, min_dist=1.5):
    pts = []
    while len(pts) < count:
        cand = rng.uniform(0, [w - 1, h - 1])
        if all(((cand - p) ** 2).sum() >= min_dist**2 for p in pts):
            pts.append(cand)
    return np.asarray(pts)


def test_lattice_cost_matches_naive_oracle():
    rng = np.random.default_rng(13)
    for _ in range(25):
        w, h = int(rng.integers(24, 64)), int(rng.integers(24, 64))
        pts = sample_separated(rng, int(rng.integers(4, 12)), w, h)
        cs = centroid_set(pts, (w, h))
        d_xi = int(rng.integers(4, 12))
        model = LatticeModel(
            int(rng.integers(0, d_xi)),
            int(rng.integers(0, 8)),
            d_xi,
            int(rng.integers(-(d_xi - 1), d_xi)),
            int(rng.integers(4, 12)),
        )
        lam = float(rng.integers(1, 8))
        assert lattice_cost(cs, model, lam) == pytest.approx(
            naive_lattice_cost(cs, model, lam)
        )


def test_lattice_cost_lower_bound_property():
    cs = perfect_grid()
    for model in [LatticeModel(0, 0, 10, 0, 10), LatticeModel(3, 2, 7, 2, 9)]:
        n_points = len(model.points_in(cs.image_bounds)[0])
        assert lattice_cost(cs, model, 5.0) >= 5.0 * n_points


# ------------------------------------------------------------- lattice search


SMALL = SynthConfig(spacing_min=5, spacing_max=12)


def test_search_perfect_grid():
    cs = perfect_grid()
    model, cost = lattice_search(cs, SMALL)
    assert model.as_tuple() == (0, 0, 10, 0, 10)
    assert cost == 45.0


def test_search_equals_exhaustive_oracle():
    rng = np.random.default_rng(29)
    for _ in range(3):
        d = int(rng.integers(6, 11))
        region = rect_region(3, 3)
        pts, _ = lattice_points(
            (2, 1, d, 1, d - 1), region, jitter=0.6, rng=rng, bounds=(30, 30)
        )
        cs = centroid_set(pts, (30, 30))
        _, cost = lattice_search(cs, SMALL)
        assert cost == exhaustive_lattice_minimum(cs, SMALL)


def test_search_recovers_sheared_lattice_with_drops():
    rng = np.random.default_rng(47)
    gen = (2, 3, 11, 2, 9)
    pts, _ = lattice_points(
        gen, rect_region(5, 4), jitter=0.5, drop=0.15, rng=rng, bounds=(56, 36)
    )
    cs = centroid_set(pts, (56, 36))
    model, _ = lattice_search(cs, SMALL)
    assert model.as_tuple() == gen


def test_search_permutation_invariant():
    rng = np.random.default_rng(53)
    pts, _ = lattice_points((1, 2, 9, 0, 8), rect_region(4, 4), jitter=0.5, rng=rng)
    cs1 = centroid_set(pts, (40, 40))
    order = rng.permutation(len(pts))
    cs2 = centroid_set(pts[order], (40, 40))
    m1, c1 = lattice_search(cs1, SMALL)
    m2, c2 = lattice_search(cs2, SMALL)
    assert m1 == m2 and c1 == c2


def test_search_translation_shifts_origin():
    rng = np.random.default_rng(59)
    pts, _ = lattice_points((0, 0, 8, 0, 8), rect_region(3, 3), jitter=0.4, rng=rng)
    cs = centroid_set(pts + 1.0, (32, 32))
    shifted = centroid_set(pts + 4.0, (32, 32))
    m1, c1 = lattice_search(cs, SMALL)
    m2, c2 = lattice_search(shifted, SMALL)
    assert (m2.b_x - m1.b_x) % m1.d_xi == 3 % m1.d_xi
    assert (m2.b_y - m1.b_y) % m1.d_yj == 3 % m1.d_yj
    # residual data term unchanged by the integer translation
    assert c1 - 5.0 * len(m1.points_in((32, 32))[0]) == pytest.approx(
        c2 - 5.0 * len(m2.points_in((32, 32))[0])
    )


def test_search_needs_four_centroids():
    cs = centroid_set([(0, 0), (10, 0), (0, 10)], (21, 21))
    with pytest.raises(DomainError, match="insufficient centroids"):
        lattice_search(cs, SMALL)


def test_heuristic_path_matches_small_space_optimum():
    # force the voting path on an instance small enough to cross-check
    rng = np.random.default_rng(61)
    pts, _ = lattice_points((2, 3, 9, 2, 8), rect_region(5, 5), jitter=0.7, rng=rng)
    cs = centroid_set(pts, (56, 48))
    cfg_heur = SynthConfig(spacing_min=5, spacing_max=12, exhaustive_limit=1)
    cfg_full = SynthConfig(spacing_min=5, spacing_max=12)
    m_heur, c_heur = lattice_search(cs, cfg_heur)
    m_full, c_full = lattice_search(cs, cfg_full)
    assert c_heur == c_full
    assert m_heur == m_full


# ----------------------------------------------------------- condition search


def test_conditions_rectangle():
    pts, _ = lattice_points((0, 0, 10, 0, 10), rect_region(3, 3))
    cs = centroid_set(pts, (21, 21))
    model = LatticeModel(0, 0, 10, 0, 10)
    res = condition_search(cs, model)
    assert res.outer_range == (0, 3)
    assert res.inner_range == (0, 3)
    assert res.conditions == ()
    assert not res.degenerate


def test_conditions_triangle():
    region = [(i, j) for i in range(4) for j in range(4) if i + j <= 3]
    pts, _ = lattice_points((0, 0, 10, 0, 10), region)
    cs = centroid_set(pts, (40, 40))
    res = condition_search(cs, LatticeModel(0, 0, 10, 0, 10))
    assert res.outer_range == (0, 4)
    assert res.inner_range == (0, 4)
    assert res.conditions == (LinearExpr(-1, -1, 3),)


def test_synthesize_trapezoid():
    region = [(i, j) for i in range(6) for j in range(3) if i + j <= 5]
    pts, _ = lattice_points((2, 2, 8, 0, 8), region)
    cs = centroid_set(pts, (48, 22))
    prog = synthesize(cs, config=SMALL)
    draws = execute(prog, (48, 22))
    assert {(d.position.x, d.position.y) for d in draws} == {
        (float(x), float(y)) for x, y in pts
    }


def test_conditions_random_convex_sublattice():
    rng = np.random.default_rng(67)
    from regsynth.geometry import convex_hull

    for _ in range(20):
        model = LatticeModel(0, 0, 8, 0, 8)
        full = [(i, j) for i in range(7) for j in range(7)]
        chosen = rng.choice(len(full), size=int(rng.integers(4, 20)), replace=False)
        seed = [full[k] for k in chosen]
        hull = convex_hull([LatticeIndex(*p) for p in seed])
        region = [p for p in full if hull.contains(LatticeIndex(*p))]
        pts, _ = lattice_points(model.as_tuple(), region)
        cs = centroid_set(pts, (56, 56))
        res = condition_search(cs, model)
        prog = RegularityProgram(
            outer_range=res.outer_range,
            inner_range=res.inner_range,
            conditions=res.conditions,
            x_expr=LinearExpr(model.d_xi, model.d_xj, model.b_x),
            y_expr=LinearExpr(0, model.d_yj, model.b_y),
            attribute=Constant(),
        )
        produced = {tuple(d.index) for d in execute(prog, (56, 56))}
        assert produced == set(region)


def test_conditions_degenerate_row():
    pts, _ = lattice_points((0, 0, 10, 0, 10), [(i, 0) for i in range(4)])
    cs = centroid_set(pts, (40, 11))
    res = condition_search(cs, LatticeModel(0, 0, 10, 0, 10))
    assert res.degenerate
    assert res.inner_range == (0, 1)
    assert res.outer_range == (0, 4)


def test_match_drops_outliers():
    pts, _ = lattice_points((0, 0, 10, 0, 10), rect_region(3, 3))
    pts = np.vstack([pts, [[7.0, 7.0]]])  # far from every lattice point
    cs = centroid_set(pts, (25, 25))
    match = match_to_lattice(cs, LatticeModel(0, 0, 10, 0, 10))
    assert 9 in match.dropped or len(match.dropped) >= 1
    assert len(match.lattice_indices) == 9


# ----------------------------------------------------------- attribute search


def colored_lattice_image(model, region, color_of, tile=None, bounds=(64, 64)):
    """Solid color blocks centered on lattice points."""
    w, h = bounds
    px = np.zeros((h, w, 3), dtype=np.uint8)
    half = min(model.d_xi, model.d_yj) // 2
    for i, j in region:
        x, y = model.position(i, j)
        x, y = int(x), int(y)
        px[max(0, y - half) : y + half + 1, max(0, x - half) : x + half + 1] = color_of(
            i, j
        )
    return RasterImage(px)


def lattice_setup(model, region, color_of, bounds=(64, 64)):
    image = colored_lattice_image(model, region, color_of, bounds=bounds)
    pts = [model.position(i, j) for i, j in region]
    cs = centroid_set([(p.x, p.y) for p in pts], bounds)
    indices = [LatticeIndex(i, j) for i, j in region]
    return image, cs, indices


def test_patch_distance_symmetric_zero_diagonal():
    rng = np.random.default_rng(97)
    image = RasterImage(rng.integers(0, 256, size=(48, 48, 3), dtype=np.uint8))
    pts = [Point2(8, 8), Point2(24, 8), Point2(8, 24), Point2(40, 40)]
    D = PatchDistance(5).matrix(image, pts)
    assert np.allclose(D, D.T)
    assert (np.diag(D) == 0).all()
    assert (D >= 0).all() and (D <= 1).all()


def test_attribute_identical_patches_constant():
    model = LatticeModel(8, 8, 16, 0, 16)
    image, cs, indices = lattice_setup(model, rect_region(3, 3), lambda i, j: (90, 90, 90))
    result = attribute_search(cs, image, indices, SynthConfig(), PatchDistance(4))
    assert result == Constant()


def test_attribute_checkerboard_modulo():
    model = LatticeModel(8, 8, 16, 0, 16)
    color = lambda i, j: (255, 255, 255) if (i + j) % 2 == 0 else (0, 0, 0)
    image, cs, indices = lattice_setup(model, rect_region(4, 4), color)
    result = attribute_search(cs, image, indices, SynthConfig(), PatchDistance(4))
    assert isinstance(result, Modulo)
    assert result.modulus == 2
    labels = {(i, j): result.evaluate(i, j) for i, j in indices}
    groups = {}
    for (i, j), lab in labels.items():
        groups.setdefault(lab, set()).add((i + j) % 2)
    assert all(len(v) == 1 for v in groups.values())


def test_attribute_three_period_stripes():
    model = LatticeModel(8, 8, 16, 0, 16)
    palette = [(255, 0, 0), (0, 255, 0), (0, 0, 255)]
    color = lambda i, j: palette[i % 3]
    image, cs, indices = lattice_setup(model, rect_region(6, 3), color, bounds=(96, 64))
    cfg = SynthConfig()
    result = attribute_search(cs, image, indices, cfg, PatchDistance(4))
    assert isinstance(result, Modulo)
    assert result.modulus == 3
    assert result.expr.coef_j == 0 and result.expr.coef_i % 3 in (1, 2)
    # beats every template over the full enumeration
    D = PatchDistance(4).matrix(image, cs.points)
    oracle = exhaustive_attribute_oracle(D, indices, cfg)
    assert result == oracle


def test_attribute_matches_oracle_on_random_colorings():
    rng = np.random.default_rng(71)
    model = LatticeModel(8, 8, 16, 0, 16)
    cfg = SynthConfig(coeff_range=2, modulus_range=(2, 3))
    for _ in range(3):
        palette = rng.integers(0, 256, size=(4, 3))
        color = lambda i, j: tuple(int(v) for v in palette[(2 * i + j) % 4])
        image, cs, indices = lattice_setup(model, rect_region(4, 4), color)
        result = attribute_search(cs, image, indices, cfg, PatchDistance(4))
        D = PatchDistance(4).matrix(image, cs.points)
        oracle = exhaustive_attribute_oracle(D, indices, cfg)
        labels_r = [result.evaluate(i, j) for i, j in indices]
        labels_o = [oracle.evaluate(i, j) for i, j in indices]
        assert attribute_expr_cost(np.asarray(labels_r), D, cfg.mu) == pytest.approx(
            attribute_expr_cost(np.asarray(labels_o), D, cfg.mu)
        )


def test_attribute_never_worse_than_constant():
    rng = np.random.default_rng(73)
    model = LatticeModel(8, 8, 16, 0, 16)
    color = lambda i, j: tuple(int(v) for v in rng.integers(0, 256, size=3))
    image, cs, indices = lattice_setup(model, rect_region(3, 3), color)
    cfg = SynthConfig(coeff_range=2, modulus_range=(2, 3))
    result = attribute_search(cs, image, indices, cfg, PatchDistance(4))
    D = PatchDistance(4).matrix(image, cs.points)
    labels = np.asarray([result.evaluate(i, j) for i, j in indices])
    constant = np.zeros(len(indices), dtype=int)
    assert attribute_expr_cost(labels, D, cfg.mu) <= attribute_expr_cost(
        constant, D, cfg.mu
    )


# ------------------------------------------------------------------ pipeline


def test_synthesize_grid_without_image():
    pts, _ = lattice_points((4, 4, 9, 0, 9), rect_region(4, 4))
    cs = centroid_set(pts, (40, 40))
    prog = synthesize(cs, config=SMALL)
    assert prog.attribute == Constant()
    draws = execute(prog, (40, 40))
    assert {(d.position.x, d.position.y) for d in draws} == {
        (float(x), float(y)) for x, y in pts
    }
    assert prog.outer_range[1] - prog.outer_range[0] == 4
    assert prog.inner_range[1] - prog.inner_range[0] == 4


def test_synthesize_triangle():
    # canvas hugs the pattern (margin under one period), else the
    # point-count regularizer legitimately prefers a shifted lattice
    region = [(i, j) for i in range(5) for j in range(5) if i + j <= 4]
    pts, _ = lattice_points((2, 2, 9, 0, 9), region)
    cs = centroid_set(pts, (42, 42))
    prog = synthesize(cs, config=SMALL)
    assert len(prog.conditions) == 1
    a, b, _ = prog.conditions[0].coef_i, prog.conditions[0].coef_j, 0
    assert (a, b) == (-1, -1)
    draws = execute(prog, (48, 48))
    assert {(d.position.x, d.position.y) for d in draws} == {
        (float(x), float(y)) for x, y in pts
    }


def test_synthesize_round_trip_positions():
    rng = np.random.default_rng(79)
    for _ in range(10):
        d_xi = int(rng.integers(6, 13))
        d_yj = int(rng.integers(6, 13))
        d_xj = int(rng.integers(-(d_xi // 3), d_xi // 3 + 1))
        model = LatticeModel(
            int(rng.integers(0, d_xi)), int(rng.integers(0, d_yj)), d_xi, d_xj, d_yj
        )
        # enough rows/columns that residuals dominate period swaps
        ni, nj = int(rng.integers(3, 6)), int(rng.integers(3, 6))
        prog = RegularityProgram(
            outer_range=(0, ni),
            inner_range=(0, nj),
            conditions=(),
            x_expr=LinearExpr(model.d_xi, model.d_xj, model.b_x),
            y_expr=LinearExpr(0, model.d_yj, model.b_y),
            attribute=Constant(),
        )
        bounds = (
            model.b_x + (ni - 1) * d_xi + max(0, (nj - 1) * d_xj) + 3,
            model.b_y + (nj - 1) * d_yj + 3,
        )
        draws = execute(prog, bounds)
        if len(draws) < 4:
            continue
        cs = centroid_set([(d.position.x, d.position.y) for d in draws], bounds)
        again = synthesize(cs, config=SynthConfig(spacing_min=5, spacing_max=13))
        redraws = execute(again, bounds)
        assert {(d.position.x, d.position.y) for d in redraws} == {
            (d.position.x, d.position.y) for d in draws
        }


def test_synthesize_deterministic():
    rng = np.random.default_rng(83)
    pts, _ = lattice_points((3, 1, 8, 2, 9), rect_region(4, 4), jitter=0.8, rng=rng)
    cs = centroid_set(pts, (48, 48))
    p1 = synthesize(cs, config=SMALL)
    p2 = synthesize(cs, config=SMALL)
    assert p1 == p2


def test_model_from_program_round_trip():
    model = LatticeModel(3, 4, 9, 2, 11)
    prog = RegularityProgram(
        outer_range=(0, 3),
        inner_range=(0, 3),
        conditions=(),
        x_expr=LinearExpr(9, 2, 3),
        y_expr=LinearExpr(0, 11, 4),
        attribute=Constant(),
    )
    assert model_from_program(prog) == model
