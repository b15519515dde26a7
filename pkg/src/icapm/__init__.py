"""Partially segmented international CAPM with asymmetric multivariate GARCH.

Quasi-maximum-likelihood estimation of time-varying world and domestic
prices of risk, integration hypothesis tests, and the supporting
diagnostics (descriptive statistics, robust inference, trend filtering,
simulation oracles).
"""

__version__ = "0.1.0"

from .data import (
    InstrumentSet,
    ModelSpec,
    ParameterLayout,
    ReturnsPanel,
    apply_window,
    ingest_panel,
    layout,
)
from .descriptive import (
    SummaryStats,
    autocorrelations,
    cross_correlations_squared,
    summarize,
    unconditional_correlations,
)
from .errors import (
    AlignmentError,
    ConfigurationError,
    DegenerateSeriesError,
    DomainError,
    EstimationError,
    IcapmError,
    ShapeError,
    SimulationError,
    ValidationError,
)
from .estimation import (
    EstimationResult,
    bhhh_maximize,
    default_start,
    fit,
    fit_prepared,
    nelder_mead_maximize,
    simplex_initialize,
)
from .filters import hp_filter
from .garch import (
    CovariancePath,
    GarchParams,
    conditional_correlations,
    covariance_step,
    indicator_innovations,
    residual_variance,
    run_recursion,
    run_symmetric_recursion,
    symmetric_covariance_step,
)
from .inference import (
    SandwichCovariance,
    TestResult,
    available_hypotheses,
    hypothesis_indices,
    information_criteria,
    lr_test,
    sandwich_covariance,
    standardized_residual_diagnostics,
    wald_test,
)
from .likelihood import (
    LikelihoodResult,
    ModelPath,
    PreparedModel,
    evaluate_model,
    log_likelihood,
    loglik_prepared,
    per_period_scores,
    prepare,
    prepare_arrays,
    total_gradient,
)
from .pricing import (
    PriceParams,
    PricePath,
    augmented_mean,
    conditional_mean,
    residuals,
    risk_prices,
)
from .simulation import (
    InstrumentProcess,
    SimulatedData,
    SimulationConfig,
    plausible_theta,
    simulate_panel,
)
