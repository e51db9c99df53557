"""Command-line surface: detect, synth, exec, inpaint, extrapolate,
edit, render.

Structured interchange is JSON (centroid files, run manifests), programs
are canonical ``.rpg`` text, images are PNG or PPM, overlays are SVG.
Failures print a machine-readable JSON object to stderr
({"code", "message", "detail"}) and exit 2 for input problems (files,
schemas, program syntax) or 3 for domain errors such as "insufficient
centroids".
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import dsl
from .detect import detect_centroids
from .errors import DomainError, DslGrammarError, DslSyntaxError
from .geometry import CentroidSet, Point2, convex_hull
from .manip import Extension, edit_regularity, extrapolate, inpaint
from .raster import load_image, load_mask, save_image
from .synth import SynthConfig, match_to_lattice, model_from_program, synthesize_report


class SchemaError(ValueError):
    """Malformed interchange file (bad JSON shape or field types)."""


# -------------------------------------------------------------- interchange


def centroids_to_json(centroids: CentroidSet, attributes=None) -> dict:
    points = []
    for k, p in enumerate(centroids.points):
        entry = {"x": p.x, "y": p.y}
        if attributes is not None:
            entry["attribute"] = int(attributes[k])
        points.append(entry)
    w, h = centroids.image_bounds
    return {"width": w, "height": h, "points": points}


def centroids_from_json(doc) -> CentroidSet:
    if not isinstance(doc, dict):
        raise SchemaError("centroid file must be a JSON object")
    for key in ("width", "height", "points"):
        if key not in doc:
            raise SchemaError(f"centroid file missing field {key!r}")
    if not isinstance(doc["width"], int) or not isinstance(doc["height"], int):
        raise SchemaError("width and height must be integers")
    if not isinstance(doc["points"], list):
        raise SchemaError("points must be a list")
    pts = []
    for k, entry in enumerate(doc["points"]):
        if not isinstance(entry, dict) or "x" not in entry or "y" not in entry:
            raise SchemaError(f"point {k} must be an object with x and y")
        if not isinstance(entry["x"], (int, float)) or not isinstance(
            entry["y"], (int, float)
        ):
            raise SchemaError(f"point {k} coordinates must be numbers")
        pts.append(Point2(float(entry["x"]), float(entry["y"])))
    return CentroidSet(points=tuple(pts), image_bounds=(doc["width"], doc["height"]))


def load_centroid_file(path) -> CentroidSet:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise SchemaError(f"invalid JSON in {path}: {err}") from err
    return centroids_from_json(doc)


def _parse_bounds(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return (int(w), int(h))
    except ValueError as err:
        raise SchemaError(f"bounds must look like 640x480, got {text!r}") from err


# ----------------------------------------------------------------- commands


def cmd_detect(args) -> int:
    image = load_image(args.image)
    kwargs = {}
    if args.peak_radius is not None:
        kwargs["peak_radius"] = args.peak_radius
    centroids = detect_centroids(image, vote_bin=args.vote_bin, **kwargs)
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(centroids_to_json(centroids), fh, indent=2)
        fh.write("\n")
    print(f"detected {len(centroids)} centroids -> {args.output}")
    return 0


def _synth_config(args) -> SynthConfig:
    return SynthConfig(
        lam=args.lam,
        mu=args.mu,
        spacing_min=args.spacing_min,
        spacing_max=args.spacing_max,
    )


def cmd_synth(args) -> int:
    started = time.monotonic()
    name = str(args.input).lower()
    image = None
    if name.endswith(".json"):
        centroids = load_centroid_file(args.input)
    else:
        image = load_image(args.input)
        centroids = detect_centroids(image)
    if args.no_attributes:
        image = None
    config = _synth_config(args)
    report = synthesize_report(centroids, image, config)
    text = dsl.unparse(report.program)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(text)
    manifest_path = args.manifest or f"{args.output}.manifest.json"
    manifest = {
        "input": str(args.input),
        "config": {
            "lambda": config.lam,
            "mu": config.mu,
            "spacing_min": config.spacing_min,
            "spacing_max": config.spacing_max,
            "no_attributes": bool(args.no_attributes),
        },
        "program": text,
        "costs": {"lattice": report.lattice_cost, "attribute": report.attribute_cost},
        "model": dict(
            zip(("b_x", "b_y", "d_xi", "d_xj", "d_yj"), report.model.as_tuple())
        ),
        "dropped_centroids": list(report.dropped),
        "degenerate_boundary": report.degenerate,
        "timing_seconds": time.monotonic() - started,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"program -> {args.output}; manifest -> {manifest_path}")
    return 0


def cmd_exec(args) -> int:
    program = dsl.parse(_read_text(args.program))
    bounds = _parse_bounds(args.bounds)
    draws = dsl.execute(program, bounds)
    cs = CentroidSet(
        points=tuple(Point2(d.position.x, d.position.y) for d in draws),
        image_bounds=bounds,
    )
    doc = centroids_to_json(cs, attributes=[d.attribute for d in draws])
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(f"{len(draws)} draws -> {args.output}")
    return 0


def cmd_inpaint(args) -> int:
    image = load_image(args.image)
    holes = ~load_mask(args.mask)
    if holes.shape != image.mask.shape:
        raise SchemaError("mask dimensions do not match the image")
    program = dsl.parse(_read_text(args.program))
    holed = image.with_holes(holes)
    out = inpaint(holed, program)
    save_image(out, args.output)
    print(f"inpainted -> {args.output}")
    return 0


def cmd_extrapolate(args) -> int:
    image = load_image(args.image)
    program = dsl.parse(_read_text(args.program))
    ext = Extension(
        left=args.left,
        right=args.right,
        top=args.top,
        bottom=args.bottom,
        relax_condition=args.relax_condition,
    )
    if ext.is_noop():
        raise SchemaError(
            "nothing to extrapolate: pass --left/--right/--top/--bottom or --relax-condition"
        )
    out = extrapolate(image, program, ext)
    save_image(out, args.output)
    print(f"extrapolated to {out.width}x{out.height} -> {args.output}")
    return 0


def cmd_edit(args) -> int:
    image = load_image(args.image)
    program = dsl.parse(_read_text(args.program))
    detected = load_centroid_file(args.centroids)
    out = edit_regularity(image, program, detected, gain=args.gain)
    save_image(out, args.output)
    print(f"edited (gain {args.gain}) -> {args.output}")
    return 0


_PALETTE = [
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
]


def render_overlay(centroids: CentroidSet, program) -> str:
    """SVG overlay: detected centroids, reconstructed lattice draws
    colored by attribute, and the matched-index hull."""
    w, h = centroids.image_bounds
    draws = dsl.execute(program, (w, h))
    model = model_from_program(program)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
    ]
    try:
        match = match_to_lattice(centroids, model)
        hull = convex_hull(match.lattice_indices)
        ring = [model.position(v.i, v.j) for v in hull.vertices]
        if len(ring) >= 2:
            pts = " ".join(f"{p.x},{p.y}" for p in ring)
            parts.append(
                f'<polygon points="{pts}" fill="none" stroke="#444" '
                'stroke-width="1" stroke-dasharray="4 2"/>'
            )
    except DomainError:
        pass  # hull is decoration; render the rest regardless
    for d in draws:
        color = _PALETTE[d.attribute % len(_PALETTE)]
        x, y = d.position.x, d.position.y
        parts.append(
            f'<path d="M {x-3} {y} H {x+3} M {x} {y-3} V {y+3}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
    for p in centroids.points:
        parts.append(
            f'<circle cx="{p.x}" cy="{p.y}" r="2.5" fill="none" '
            'stroke="#d62728" stroke-width="1"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_render(args) -> int:
    centroids = load_centroid_file(args.centroids)
    program = dsl.parse(_read_text(args.program))
    svg = render_overlay(centroids, program)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(svg)
    print(f"overlay -> {args.output}")
    return 0


def _read_text(path) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


# -------------------------------------------------------------------- driver


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regsynth",
        description="Induce regularity programs from repeated patterns and "
        "manipulate images with them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect repeated-object centroids")
    p.add_argument("image")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--peak-radius", type=int, default=None)
    p.add_argument("--vote-bin", type=float, default=2.0)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("synth", help="synthesize a program from centroids or an image")
    p.add_argument("input", help="centroids.json or an image file")
    p.add_argument("-o", "--output", required=True, help="program (.rpg) path")
    p.add_argument("--manifest", default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=5.0)
    p.add_argument("--mu", type=float, default=10.0)
    p.add_argument("--spacing-min", type=int, default=4)
    p.add_argument("--spacing-max", type=int, default=64)
    p.add_argument("--no-attributes", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("exec", help="execute a program to centroids")
    p.add_argument("program")
    p.add_argument("--bounds", required=True, help="WxH, e.g. 640x480")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_exec)

    p = sub.add_parser("inpaint", help="fill holes guided by a program")
    p.add_argument("image")
    p.add_argument("mask", help="1-channel PNG, 0 = hole")
    p.add_argument("program")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("extrapolate", help="extend the pattern outward")
    p.add_argument("image")
    p.add_argument("program")
    p.add_argument("--left", type=int, default=0)
    p.add_argument("--right", type=int, default=0)
    p.add_argument("--top", type=int, default=0)
    p.add_argument("--bottom", type=int, default=0)
    p.add_argument("--relax-condition", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_extrapolate)

    p = sub.add_parser("edit", help="exaggerate or reduce irregularity")
    p.add_argument("image")
    p.add_argument("program")
    p.add_argument("centroids")
    p.add_argument("--gain", type=float, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("render", help="SVG overlay of centroids and program")
    p.add_argument("centroids")
    p.add_argument("program")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_render)

    return parser


def _emit_error(code: str, message: str, detail=None) -> None:
    doc = {"code": code, "message": message, "detail": detail or {}}
    print(json.dumps(doc), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as err:
        _emit_error("io", str(err), {"path": getattr(err, "filename", None)})
        return 2
    except SchemaError as err:
        _emit_error("schema", str(err))
        return 2
    except DslSyntaxError as err:
        _emit_error("syntax", str(err), {"line": err.line, "column": err.column})
        return 2
    except DslGrammarError as err:
        _emit_error("grammar", str(err))
        return 2
    except DomainError as err:
        _emit_error("domain", str(err))
        return 3
    except OSError as err:
        _emit_error("io", str(err))
        return 2


if __name__ == "__main__":
    sys.exit(main())
