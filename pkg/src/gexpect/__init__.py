"""Computable sublinear expectations, G-normal laws and their processes."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigurationError,
    DimensionError,
    DivergenceError,
    DomainError,
    GExpectError,
    UnsupportedError,
)
from .expectation import (  # noqa: E402
    DiscreteMeasure,
    MeasureFamily,
    SampleSpace,
    capacity,
    independent_pair_expect,
    is_dominated,
    linear_expect,
    lower_expect,
    lp_norm,
    sublinear_expect,
)
from .gfunction import (  # noqa: E402
    CovarianceSet,
    GFamily,
    GFunction,
    SigmaInterval,
    check_g_axioms,
    g_eval,
    gbm_second_moment,
    validate_consistency,
)
from .gheat import Grid, GridFunction, SolverConfig, evaluate_at, richardson_refine, solve_gheat_1d, solve_gheat_2d  # noqa: E402
from .gnormal import GNormal, concave_closed_form, convex_closed_form, gnormal_expect, verify_linear_image, verify_stability  # noqa: E402

__all__ = [
    "ConfigurationError", "DimensionError", "DivergenceError", "DomainError", "GExpectError", "UnsupportedError",
    "DiscreteMeasure", "MeasureFamily", "SampleSpace", "capacity", "independent_pair_expect", "is_dominated",
    "linear_expect", "lower_expect", "lp_norm", "sublinear_expect",
    "CovarianceSet", "GFamily", "GFunction", "SigmaInterval", "check_g_axioms", "g_eval", "gbm_second_moment",
    "validate_consistency",
    "Grid", "GridFunction", "SolverConfig", "evaluate_at", "richardson_refine", "solve_gheat_1d", "solve_gheat_2d",
    "GNormal", "concave_closed_form", "convex_closed_form", "gnormal_expect", "verify_linear_image",
    "verify_stability",
]
