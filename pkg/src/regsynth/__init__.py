"""regsynth: lattice regularity programs for repeated-pattern images.

Induces a small symbolic program (nested loops, linear boundary
conditions, an attribute expression) from repeated-object centroids,
and uses the program for structure-preserving inpainting, extrapolation,
and regularity editing via exemplar compositing over program-guided
aggregation stacks.
"""

from .detect import DisplacementVote, PeakMap, detect_centroids
from .dsl import (
    AttributeExpr,
    Constant,
    DrawCommand,
    IsZero,
    IsZeroBoth,
    LinearExpr,
    Modulo,
    ModuloBoth,
    Quotient,
    RegularityProgram,
    execute,
    load_program,
    parse,
    program_from_json,
    program_to_json,
    save_program,
    unparse,
)
from .errors import (
    DomainError,
    DslError,
    DslGrammarError,
    DslSyntaxError,
    RegSynthError,
)
from .geometry import (
    CentroidSet,
    ConvexHull,
    LatticeIndex,
    Point2,
    convex_hull,
    min_cost_assignment,
    voronoi_partition,
)
from .manip import (
    DisplacementField,
    EditPlan,
    EditTask,
    Extension,
    composite_paint,
    compute_displacements,
    edit_regularity,
    extrapolate,
    inpaint,
)
from .raster import (
    AggregationStack,
    RasterImage,
    attribute_filter,
    build_stack,
    load_image,
    load_mask,
    save_image,
)
from .synth import (
    LatticeModel,
    PatchDistance,
    SynthConfig,
    SynthReport,
    attribute_search,
    condition_search,
    lattice_cost,
    lattice_search,
    match_to_lattice,
    model_from_program,
    synthesize,
    synthesize_report,
)

__version__ = "0.1.0"
