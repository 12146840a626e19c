"""Simulation laboratory for planar free fields, level sets and loop soups."""

from .current import (
    ConsistencyReport,
    CurrentConfig,
    DominationReport,
    brute_force_current_law,
    domination_check,
    domination_grid_ok,
    f1_pmf,
    f2_pmf,
    loop_current_consistency,
    sample_current_rejection,
    sample_parity_conditional,
)
from .errors import (
    AcceptanceStarvationError,
    ConstructionError,
    DomainEmptyError,
    InfeasibleConstraintError,
    InvalidSizeError,
    MeshTooCoarseError,
    ParityError,
    PrecisionError,
    RangeError,
    SchemaError,
)
from .explore import (
    ExplorationTrace,
    Observable,
    conditional_stats,
    explore_discrete,
    explore_metric,
    observable,
    observable_variance,
    variance_gap,
)
from .gfield import (
    FieldSample,
    GreenMatrix,
    MetricFieldSample,
    bridge_above_prob,
    extend_to_metric,
    green_matrix,
    harmonic_extension,
    load_field,
    sample_conditional_dgff,
    sample_dgff,
    sample_dgff_batch,
)
from .lattice import (
    BoxSpec,
    MetricGraphSpec,
    build_box,
    build_metric_graph,
    inner_box,
    inner_boundary,
    inner_box_spec,
)
from .levelset import (
    ContourResult,
    LevelSet,
    chemical_distance,
    has_crossing,
    level_set,
    minimal_closed_contour,
)
from .loopsoup import (
    Loop,
    LoopSoupSample,
    brute_force_loop_law,
    induced_graph,
    loop_chemical_distance,
    occupation_field,
    sample_loop_soup,
    soup_summary,
)
from .repulsion import (
    ConstraintSpec,
    brascamp_lieb_check,
    entropic_mean_profile,
    gibbs_constrained_field,
    listed_monotone_pairs,
    stochastic_order_check,
)
from .walks import (
    HarmonicProfile,
    MakarovResult,
    build_harmonic_profile,
    escape_before_prob,
    harmonic_measure_exact,
    harmonic_measure_mc,
    hm_infinity,
    makarov_statistic,
    potential_kernel,
    wilson_interval,
)

__version__ = "0.1.0"
