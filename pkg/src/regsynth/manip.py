"""Program-guided image manipulation.

Inpainting fills each corrupted object from an aggregation stack of
same-pattern sources with an exemplar compositor; extrapolation and
regularity editing reduce to recurrent inpainting: decide which objects
are new or displaced, mark the affected pixels as holes, then fill the
objects one at a time, each fill seeing the results of the previous
ones.

The compositor consumes the same stack contract a learned painter
would, so it can be swapped out without touching the callers. Per-layer
weights come from how well each source's known pixels around the target
match the base image; hole pixels are then a per-pixel convex blend of
the covering layers. On perfectly tiled inputs every layer agrees and
the fill is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from ._parallel import parallel_map
from .dsl import DrawCommand, LinearExpr, RegularityProgram, execute
from .errors import DomainError
from .geometry import CentroidSet, Point2, min_cost_assignment, voronoi_partition
from .raster import AggregationStack, RasterImage, attribute_filter, build_stack


@dataclass(frozen=True)
class EditTask:
    """One fill: a target draw and the hole region it owns."""

    draw: DrawCommand
    target_index: int  # position of the draw in the executed draw list
    region: np.ndarray  # bool (H, W): pixels this task may fill


@dataclass(frozen=True)
class EditPlan:
    """Ordered fill tasks; earlier tasks never read later tasks' holes.

    provenance is one of 'inpaint', 'extrapolate', 'edit'.
    """

    tasks: tuple[EditTask, ...]
    provenance: str


@dataclass(frozen=True)
class DisplacementField:
    """Per matched centroid: vector from the program-reconstructed
    (ideal) position to the detected position."""

    draw_indices: tuple[int, ...]
    centroid_indices: tuple[int, ...]
    vectors: tuple[tuple[float, float], ...]


def compute_displacements(
    draws: Sequence[DrawCommand], detected: CentroidSet
) -> DisplacementField:
    """Match detected centroids to program draws and measure the offsets."""
    ideal = [d.position for d in draws]
    pairs = min_cost_assignment(list(detected.points), ideal)
    di, ci, vecs = [], [], []
    for c_idx, p_idx in pairs:
        p = detected.points[c_idx]
        q = ideal[p_idx]
        di.append(p_idx)
        ci.append(c_idx)
        vecs.append((p.x - q.x, p.y - q.y))
    return DisplacementField(tuple(di), tuple(ci), tuple(vecs))


# ------------------------------------------------------------- compositing


def composite_paint(
    stack: AggregationStack,
    region: Optional[np.ndarray] = None,
    tau: float = 0.05,
) -> RasterImage:
    """Fill the base image's holes (within ``region``) from the layers.

    Each layer is scored by the mean absolute difference, over the known
    ring (pixels valid in both base and layer, inside ``region``),
    against the base; layer weights are softmax(-score / tau). Hole
    pixels become the weight-renormalized blend of the layers valid
    there. Known pixels pass through bit-exact.
    """
    if len(stack.layers) == 0:
        raise DomainError("no source objects")
    base = stack.base
    holes = ~base.mask
    if region is not None:
        holes = holes & region
    if not holes.any():
        return base

    ring_scope = base.mask if region is None else (base.mask & region)

    def layer_score(layer):
        ring = ring_scope & layer.mask
        if ring.any():
            diff = np.abs(
                layer.pixels[ring].astype(np.float64) - base.pixels[ring]
            ).mean()
            return diff / 255.0
        return np.nan  # no evidence: neutral weight below

    scores = np.asarray(parallel_map(layer_score, stack.layers))

    known = np.isfinite(scores)
    weights = np.zeros(len(stack.layers))
    if known.any():
        z = -scores[known] / max(tau, 1e-9)
        z -= z.max()
        w = np.exp(z)
        weights[known] = w / w.sum()
    else:
        weights[:] = 1.0 / len(stack.layers)

    hy, hx = np.nonzero(holes)
    cover = np.zeros(len(hy))
    acc = np.zeros((len(hy), 3))
    for k, layer in enumerate(stack.layers):
        valid = layer.mask[hy, hx]
        wk = np.where(valid, weights[k], 0.0)
        if not known[k]:
            wk = np.where(valid, 1e-12, 0.0)  # covers but carries no evidence
        cover += wk
        acc += wk[:, None] * layer.pixels[hy, hx].astype(np.float64)
    uncovered = cover <= 0.0
    if uncovered.any():
        # a hole pixel may still be covered only by no-evidence layers
        plain = np.zeros(len(hy))
        plain_acc = np.zeros((len(hy), 3))
        for layer in stack.layers:
            valid = layer.mask[hy, hx]
            plain += valid
            plain_acc += valid[:, None] * layer.pixels[hy, hx].astype(np.float64)
        still = plain <= 0.0
        if still.any():
            where = sorted(zip(hx[still].tolist(), hy[still].tolist()))
            raise DomainError(f"uncovered hole pixel at {where[:8]}")
        acc[uncovered] = plain_acc[uncovered]
        cover[uncovered] = plain[uncovered]

    filled = np.rint(acc / cover[:, None]).astype(np.uint8)
    out_px = base.pixels.copy()
    out_px[hy, hx] = filled
    out_mask = base.mask.copy()
    out_mask[hy, hx] = True
    return RasterImage(out_px, out_mask)


def _diffuse_background(image: RasterImage) -> RasterImage:
    """Fill remaining holes with the nearest valid pixel's value."""
    if image.mask.all():
        return image
    if not image.mask.any():
        raise DomainError("uncovered hole pixel at [(0, 0)] (image fully masked)")
    _, (iy, ix) = ndimage.distance_transform_edt(~image.mask, return_indices=True)
    px = image.pixels[iy, ix]
    return RasterImage(px, np.ones_like(image.mask))


# ---------------------------------------------------------------- inpainting


def _object_labels(draws: Sequence[DrawCommand], bounds) -> np.ndarray:
    cs = CentroidSet(
        points=tuple(Point2(d.position.x, d.position.y) for d in draws),
        image_bounds=bounds,
    )
    return voronoi_partition(cs)


def plan_inpaint(image: RasterImage, draws: Sequence[DrawCommand]) -> EditPlan:
    """Targets are draws whose Voronoi cell intersects the holes,
    largest hole count first (draw order breaks ties)."""
    holes = ~image.mask
    labels = _object_labels(draws, image.bounds)
    tasks = []
    for k, draw in enumerate(draws):
        cell = labels == k
        count = int((cell & holes).sum())
        if count > 0:
            tasks.append((-count, k, EditTask(draw=draw, target_index=k, region=cell)))
    tasks.sort(key=lambda t: (t[0], t[1]))
    return EditPlan(tasks=tuple(t[2] for t in tasks), provenance="inpaint")


def _run_plan(
    image: RasterImage,
    draws: Sequence[DrawCommand],
    plan: EditPlan,
    tau: float = 0.05,
) -> RasterImage:
    """Recurrent fill: each task's stack is built from the current
    image, so later tasks consume earlier results. Hole pixels no
    filtered layer covers are left for background diffusion."""
    current = image
    for task in plan.tasks:
        stack = build_stack(current, draws, task.target_index)
        stack = attribute_filter(stack, stack.sources, task.draw.attribute)
        coverage = np.zeros(current.mask.shape, dtype=bool)
        for layer in stack.layers:
            coverage |= layer.mask
        region = task.region & (current.mask | coverage)
        if (region & ~current.mask).any():
            current = composite_paint(stack, region=region, tau=tau)
    return current


def inpaint(
    image: RasterImage, program: RegularityProgram, tau: float = 0.05
) -> RasterImage:
    """Fill every hole, object cells first (recurrently), then diffuse
    the background. Returns a fully valid image; known pixels are
    untouched."""
    if image.mask.all():
        return image
    draws = execute(program, image.bounds)
    if len(draws) >= 2:
        plan = plan_inpaint(image, draws)
        image = _run_plan(image, draws, plan, tau=tau)
    return _diffuse_background(image)


# -------------------------------------------------------------- extrapolation


@dataclass(frozen=True)
class Extension:
    """Canvas growth in pixels per side, or a uniform condition
    relaxation (adds K to every If-condition constant)."""

    left: int = 0
    right: int = 0
    top: int = 0
    bottom: int = 0
    relax_condition: int = 0

    def is_noop(self):
        return not (
            self.left or self.right or self.top or self.bottom or self.relax_condition
        )


def _shift_program(program: RegularityProgram, dx: int, dy: int) -> RegularityProgram:
    return replace(
        program,
        x_expr=LinearExpr(
            program.x_expr.coef_i, program.x_expr.coef_j, program.x_expr.constant + dx
        ),
        y_expr=LinearExpr(
            program.y_expr.coef_i, program.y_expr.coef_j, program.y_expr.constant + dy
        ),
    )


def _relax_conditions(program: RegularityProgram, k: int) -> RegularityProgram:
    conds = tuple(
        LinearExpr(c.coef_i, c.coef_j, c.constant + k) for c in program.conditions
    )
    return replace(program, conditions=conds)


def _boundary_candidates(program: RegularityProgram):
    """(kind, payload, outward xy direction) for each relaxable boundary."""
    d_xi = program.x_expr.coef_i
    d_xj = program.x_expr.coef_j
    d_yj = program.y_expr.coef_j

    def xy(di, dj):
        v = np.asarray([di * d_xi + dj * d_xj, dj * d_yj], dtype=float)
        n = np.hypot(*v)
        return v / n if n > 0 else v

    out = [
        ("hi_i", None, xy(1, 0)),
        ("lo_i", None, xy(-1, 0)),
        ("hi_j", None, xy(0, 1)),
        ("lo_j", None, xy(0, -1)),
    ]
    for k, cond in enumerate(program.conditions):
        out.append(("cond", k, xy(-cond.coef_i, -cond.coef_j)))
    return out


def _relax_one(program: RegularityProgram, kind, payload) -> RegularityProgram:
    if kind == "hi_i":
        return replace(
            program, outer_range=(program.outer_range[0], program.outer_range[1] + 1)
        )
    if kind == "lo_i":
        return replace(
            program, outer_range=(program.outer_range[0] - 1, program.outer_range[1])
        )
    if kind == "hi_j":
        return replace(
            program, inner_range=(program.inner_range[0], program.inner_range[1] + 1)
        )
    if kind == "lo_j":
        return replace(
            program, inner_range=(program.inner_range[0] - 1, program.inner_range[1])
        )
    conds = list(program.conditions)
    c = conds[payload]
    conds[payload] = LinearExpr(c.coef_i, c.coef_j, c.constant + 1)
    return replace(program, conditions=tuple(conds))


def _grow_toward_side(program, bounds, side_vector, known_positions):
    """Relax the boundary best aligned with the side until relaxing it
    stops adding in-frame draws. Loop bounds win direction ties."""
    side = np.asarray(side_vector, dtype=float)
    kind, payload, _ = max(
        _boundary_candidates(program),
        key=lambda cand: (float(cand[2] @ side), 0 if cand[0] == "cond" else 1),
    )

    grown = program
    seen = set(known_positions)
    added_any = False
    for _ in range(10000):
        trial = _relax_one(grown, kind, payload)
        positions = {
            (d.position.x, d.position.y) for d in execute(trial, bounds)
        }
        if positions <= seen:
            break
        seen = seen | positions
        grown = trial
        added_any = True
    return grown, added_any


def _typical_cell_radius(labels: np.ndarray, draws) -> float:
    """Median over draws of the farthest pixel in the draw's cell."""
    radii = []
    h, w = labels.shape
    yy, xx = np.mgrid[0:h, 0:w]
    for k, d in enumerate(draws):
        cell = labels == k
        if not cell.any():
            continue
        r = np.hypot(xx[cell] - d.position.x, yy[cell] - d.position.y).max()
        radii.append(r)
    return float(np.median(radii)) if radii else 0.0


def extrapolate(
    image: RasterImage,
    program: RegularityProgram,
    extension: Extension,
    tau: float = 0.05,
) -> RasterImage:
    """Enlarge the canvas and/or relax the pattern boundary, then paint
    the newly admitted objects by recurrent inpainting, nearest to the
    original frame first."""
    if extension.is_noop():
        return image

    old_draws = execute(program, image.bounds)
    w, h = image.bounds
    lp, rp, tp, bp = extension.left, extension.right, extension.top, extension.bottom
    new_w, new_h = w + lp + rp, h + tp + bp

    px = np.zeros((new_h, new_w, 3), dtype=np.uint8)
    mask = np.zeros((new_h, new_w), dtype=bool)
    px[tp : tp + h, lp : lp + w] = image.pixels
    mask[tp : tp + h, lp : lp + w] = image.mask
    canvas = RasterImage(px, mask)

    grown = _shift_program(program, lp, tp)
    base_positions = {
        (d.position.x + lp, d.position.y + tp) for d in old_draws
    }
    bounds = (new_w, new_h)

    sides = []
    if rp:
        sides.append((1.0, 0.0))
    if lp:
        sides.append((-1.0, 0.0))
    if bp:
        sides.append((0.0, 1.0))
    if tp:
        sides.append((0.0, -1.0))

    for side in sides:
        grown, _ = _grow_toward_side(grown, bounds, side, base_positions)
    if extension.relax_condition:
        if not grown.conditions:
            raise DomainError("no new draws in extension")
        grown = _relax_conditions(grown, extension.relax_condition)

    draws = execute(grown, bounds)
    new_draws = [
        (k, d)
        for k, d in enumerate(draws)
        if (d.position.x, d.position.y) not in base_positions
    ]
    if not new_draws:
        raise DomainError("no new draws in extension")

    def frame_distance(d):
        x, y = d.position.x - lp, d.position.y - tp
        dx = max(0.0, -x, x - (w - 1))
        dy = max(0.0, -y, y - (h - 1))
        return float(np.hypot(dx, dy))

    ordered = sorted(new_draws, key=lambda kd: (frame_distance(kd[1]), kd[1].index))

    # Claim regions with new draws listed first: Voronoi ties resolve to
    # the lowest index, so seam pixels equidistant between an old and a
    # new object go to the new one.
    claim_order = [k for k, _ in ordered] + [
        k for k in range(len(draws)) if (draws[k].position.x, draws[k].position.y) in base_positions
    ]
    claim_cs = CentroidSet(
        points=tuple(
            Point2(draws[k].position.x, draws[k].position.y) for k in claim_order
        ),
        image_bounds=bounds,
    )
    claim_labels = voronoi_partition(claim_cs)

    if extension.relax_condition:
        # new objects claim their cell out to a typical cell radius
        labels = _object_labels(draws, bounds)
        radius = _typical_cell_radius(labels, draws)
        yy, xx = np.mgrid[0:new_h, 0:new_w]
        hole = np.zeros((new_h, new_w), dtype=bool)
        for slot, (k, d) in enumerate(ordered):
            near = np.hypot(xx - d.position.x, yy - d.position.y) <= radius
            hole |= (claim_labels == slot) & near
        canvas = canvas.with_holes(hole)

    tasks = []
    holes = ~canvas.mask
    for slot, (k, d) in enumerate(ordered):
        region = claim_labels == slot
        if (region & holes).any():
            tasks.append(EditTask(draw=d, target_index=k, region=region))
    plan = EditPlan(tasks=tuple(tasks), provenance="extrapolate")
    result = _run_plan(canvas, draws, plan, tau=tau)
    return _diffuse_background(result)


# ---------------------------------------------------------- regularity editing


def edit_regularity(
    image: RasterImage,
    program: RegularityProgram,
    detected: CentroidSet,
    gain: float,
    tau: float = 0.05,
) -> RasterImage:
    """Scale each detected centroid's offset from its ideal position by
    ``gain``, moving Voronoi cells rigidly with their centroids.

    gain 1 is the identity, gain 0 snaps objects onto the ideal lattice,
    gain 2 doubles every irregularity. Overlaps resolve in favor of the
    later (higher-index) cell; uncovered pixels become holes and are
    filled by recurrent inpainting.
    """
    draws = execute(program, image.bounds)
    if not draws:
        raise DomainError("program draws nothing inside the image")
    field = compute_displacements(draws, detected)
    labels = voronoi_partition(detected)
    h, w = image.pixels.shape[:2]

    shift_of = {}
    for c_idx, vec in zip(field.centroid_indices, field.vectors):
        shift_of[c_idx] = (
            int(round((gain - 1.0) * vec[0])),
            int(round((gain - 1.0) * vec[1])),
        )

    out_px = np.zeros((h, w, 3), dtype=np.uint8)
    out_mask = np.zeros((h, w), dtype=bool)
    for c_idx in range(len(detected)):
        cell = labels == c_idx
        dx, dy = shift_of.get(c_idx, (0, 0))
        cy, cx = np.nonzero(cell)
        ty, tx = cy + dy, cx + dx
        keep = (ty >= 0) & (ty < h) & (tx >= 0) & (tx < w)
        out_px[ty[keep], tx[keep]] = image.pixels[cy[keep], cx[keep]]
        out_mask[ty[keep], tx[keep]] = image.mask[cy[keep], cx[keep]]

    moved = RasterImage(out_px, out_mask)
    if moved.mask.all():
        return moved
    return inpaint(moved, program, tau=tau)
