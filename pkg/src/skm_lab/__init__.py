"""Stochastic Krasnoselskii-Mann iterations with exact and Monte Carlo verification."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    BudgetExceeded,
    InvalidInputError,
    NumericalError,
    OracleFailure,
    SkmError,
)
from .operators import (  # noqa: E402
    AffineMap,
    AffineNormalCone,
    BallNormalCone,
    BoxNormalCone,
    Composition,
    ConvexCombination,
    DavisYinComposite,
    GradientStep,
    Identity,
    L1Subdifferential,
    LogisticFamily,
    QuadraticFamily,
    QuadraticGradient,
    Resolvent,
    ResolventStep,
    ScenarioSet,
    StochasticOperator,
    Translation,
    ZeroOperator,
    apply,
    check_nonexpansive,
    expected_apply,
    residual,
    resolvent_apply,
    variance_at,
)
from .problems import (  # noqa: E402
    KnownSolution,
    SgdProblem,
    StosProblem,
    build_sgd_operator,
    build_stos_operator,
    lift_zero_to_fixed_point,
    solve_reference,
    stos_step,
)
from .reports import InequalityReport  # noqa: E402
from .skm import (  # noqa: E402
    Constant,
    ConstantHorizon,
    PowerDecay,
    Trajectory,
    lambda_products,
    random_index_distribution,
    relaxation,
    run_skm,
    running_min_residual,
    sample_output,
    theoretical_residual_bound,
)
from .verify import (  # noqa: E402
    EnumerationResult,
    PowerSequence,
    RateFit,
    check_decrease_inequality,
    check_residual_bound,
    check_variance_constancy,
    check_variance_transfer,
    check_weighted_min_vanishing,
    enumerate_expectations,
    fit_rate,
)
