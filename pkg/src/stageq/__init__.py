"""Throttled tandem-stage queueing chain: exact and fixed-step Monte
Carlo, a negative-binomial moment closure, and matrix-exponential and
stationary references."""

from .errors import (
    ClosureDomainError,
    ConfigError,
    IntegrationFailureError,
    InvalidParameterError,
    InvalidStepSizeError,
    LogicError,
    NoStationaryDistributionError,
    NumericalError,
    PreconditionError,
    StateSpaceTooLargeError,
)
from .model import (
    Constant,
    InputSchedule,
    ModelConfig,
    PerStageThresholds,
    PiecewiseConstant,
    RandomThresholds,
    Sinusoid,
    ThresholdSpec,
    UniformThresholds,
    input_rate_at,
    throttle,
    transfer_rate,
)
from .closure import (
    IntegratorSettings,
    MomentState,
    NBParams,
    closure_rhs,
    deficit_sum,
    integrate,
    integrate_mean_field,
    mean_field_rhs,
    nb_aux_Q,
    nb_pmf,
    project_D,
    weighted_deficit_sum,
    write_trajectory_csv,
)
from .oracle import (
    TransientDistribution,
    TruncatedGenerator,
    build_truncated_generator,
    transient_oracle,
)
from .simulate import (
    EnsembleStats,
    ExactSSA,
    FixedStep,
    LatticeState,
    SimScheme,
    apply_move,
    channel_rates,
    run_ensemble,
    sample_trial,
    step_exact,
    step_fixed,
)
from .stationary import (
    StationaryLaw,
    product_stationary_pmf,
    stage_stationary_pmf,
    stationary_moment,
)
from .harness import (
    ENGINES,
    ComparisonReport,
    EngineResult,
    MetricRow,
    Scenario,
    emit_plot_data,
    front_position,
    run_scenario,
)
from .configio import (
    apply_overrides,
    load_preset,
    load_scenario,
    parse_scheme,
    preset_description,
    preset_names,
)

__version__ = "0.1.0"
