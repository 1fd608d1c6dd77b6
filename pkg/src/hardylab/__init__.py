"""hardylab: desk-scale numerics for Hardy-space truncation, K-functionals,
and holomorphic martingales on Wiener space."""

__version__ = "0.1.0"

from .circle import (
    AnalyticBoundaryFunction,
    BoundaryFunction,
    Spectrum,
    analytic_completion,
    as_analytic,
    conjugate,
    evaluate_interior,
    from_spectrum,
    lorentz_norm,
    mean_value,
    norm_p,
    rearrangement,
    riesz_project,
    to_spectrum,
)
from .factorization import (
    BlaschkeSpec,
    FactoredFunction,
    SingularAtomSpec,
    blaschke_eval,
    inner_outer_split,
    make_schur_positive,
    outer_from_modulus,
    schur_check,
    singular_eval,
    synthesize,
)
from .marcinkiewicz import (
    DecompositionResult,
    decompose,
    k_lower_l_couple,
    k_upper,
    level_set,
    real_interp_norm,
    s_zero_two_ways,
    schur_defect_report,
    tail_bound_report,
)
from .wiener import (
    MartingaleMatrix,
    PathEnsemble,
    SimConfig,
    embed,
    maximal_function,
    project,
    sample_paths,
    stochastic_hilbert_closed,
    stochastic_hilbert_mc,
    stopping_decompose,
    truncation_family,
)
