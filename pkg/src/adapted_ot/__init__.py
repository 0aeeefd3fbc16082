"""Adapted optimal transport on finite filtered processes (process trees)."""

from .couplings import (
    Coupling,
    ThreeWayMeasure,
    causal_constraints,
    check_coupling,
    ci_product,
    glue_causal,
    identity_coupling,
    product_coupling,
)
from .lp import LinearProgram, LPSolution, frank_wolfe, rational_mode, solve_lp, solve_transport
from .measures import (
    DiscreteMeasure,
    NestedLaw,
    canonicalize,
    dirac,
    nested_distance,
    nested_equal,
    uniform,
    wasserstein,
)
from .metrics import (
    DistanceReport,
    aw_dist,
    aw_dist_lp_oracle,
    cw_dist,
    optimal_stopping_value,
    scw_dist,
    w_dist,
)
from .process import (
    E1,
    E2,
    E3,
    ProcessTree,
    hellwig_statistic,
    hk_quotient,
    is_n_markov,
    isomorphic,
    leaky_bet,
    markov_statistic,
    path_law,
    plainify,
    prediction_process,
)
from .weak import WeakOTReport, convex_projection_check, martingale_coupling_exists, v_dist, v_sym

__version__ = "0.1.0"
