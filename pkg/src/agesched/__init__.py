"""Discrete-event simulator and analytical toolkit for age-of-information
scheduling of stochastic sources on a shared non-preemptive channel."""

from .core import (
    ConfigError,
    DelayKind,
    DelaySpec,
    RandomStream,
    SourceParams,
    SystemConfig,
    make_stream,
    sample_delay,
    sample_intergen,
    validate_config,
)
from .capacity import (
    FeasibilityReport,
    InfeasibleTarget,
    aaoi_lower_bound,
    aaoi_upper_bound_randomized,
    check_feasibility,
    max_feasible_spacing,
    pick_probabilities,
)
from .solver import (
    GridTooCoarse,
    RelaxationSolution,
    grid_oracle,
    solve_relaxation,
    stationary_spacing,
)
from .engine import (
    IdleLock,
    PolicyContractViolation,
    SimResult,
    TooFewSamples,
    Transmit,
    Wait,
    aoi_integral_segment,
    gap_variance,
    replay_aaoi,
    run,
    simulate_pick_process,
)
from .policies import (
    MarkedRandomizedPolicy,
    RandomizedPolicy,
    RoundRobinPolicy,
    ThresholdWaitPolicy,
    grid_search_threshold,
    mark_generation_times,
    marked_from_targets,
    policy_from_name,
    randomized_from_targets,
)

__version__ = "0.1.0"
