"""Calculus of variations on unbounded time scales.

Delta calculus on closed unbounded subsets of the reals, improper-integral
convergence classification, Euler-Lagrange residuals and transversality
estimates for infinite-horizon problems, weak-maximality probing, and a
truncated-horizon direct solver -- plus a JSON problem-file CLI (``tsvar``).
"""

from .calculus import (
    GridFunction,
    IdentityReport,
    LimitConfig,
    LimitEstimate,
    LimitKind,
    classify_limit,
    cumulative_delta_integral,
    delta_derivative,
    delta_derivative_all,
    delta_integral,
    identity_pack,
    improper_integral,
    sigma_shift,
    sigma_shift_all,
)
from .errors import (
    BoundaryUndefined,
    DimensionMismatch,
    DSLParseError,
    EvaluationError,
    ExpressionError,
    GridTooSmall,
    InadmissiblePath,
    InadmissibleVariation,
    InsufficientHorizons,
    InvalidTimeScale,
    InvalidWindow,
    NodeNotInGrid,
    NonFiniteObjective,
    NotInTimeScale,
    ParseError,
    PartialsMismatch,
    ProbeFailed,
    ProblemFileError,
    StepNotPositive,
    TsvarError,
    ZeroEpsilon,
)
from .problemfile import ProblemFile, load_problem_file, problem_from_dict
from .problems import (
    Candidate,
    NamedProblem,
    corpus,
    ex_neg,
    ex_pos,
    get_problem,
    lqr_grid,
    lqr_grid_truncation_oracle,
    lqr_ray,
    lqr_ray_truncation_oracle,
    scalar_traj,
)
from .timescale import (
    ArithmeticTail,
    ClosedInterval,
    DiscretePoints,
    SampleGrid,
    TimeScaleSpec,
    UnboundedRay,
    format_timescale,
    integer_scale,
    parse_timescale,
    real_ray,
    timescale_from_structured,
    timescale_to_structured,
    union,
)
from .variational import (
    GateauxReport,
    HorizonPlan,
    Lagrangian,
    LemmaWitness,
    Problem,
    SolveParams,
    SolveResult,
    Trajectory,
    VerificationReport,
    Verdict,
    VerifyConfig,
    compact_bump,
    decaying_pulse,
    el_residual,
    el_sup_norm,
    first_variation,
    fundamental_lemma_probe,
    gateaux_report,
    is_weak_max_consistent,
    liminf_over_tails,
    make_horizon_plan,
    parts_decomposition_residual,
    perturbed_generator,
    sample_trajectory,
    smoothstep_tail,
    solve_truncated,
    transversality_liminf,
    transversality_sweep,
    transversality_term,
    variation_quotient,
    verify_candidate,
    weak_max_compare,
)

__version__ = "0.1.0"
