"""Event-triggered transmission scheduling over lossy channels.

A simulator and certification toolkit for sensor loops that must keep
the second moment of an unstable linear plant inside a decaying
envelope while transmitting over a Bernoulli packet-drop link.  The
package answers three questions:

  * is a given envelope certifiably attainable (`certify`),
  * how does a schedule behave empirically (`sim`, `policies`),
  * and do the closed forms agree with brute force (`sim` oracles).

`model` holds the plant, channel, and loop bookkeeping; `analytic` the
closed-form scheduling criteria; `config`, `plots`, and `cli` the
experiment front end.
"""

from .analytic import (
    LookaheadInputs,
    SeriesDivergenceError,
    criterion_upper_bound,
    envelope_steps_left,
    geometric_factor,
    lookahead_criterion,
    max_sufficient_period,
    open_loop_performance,
    periodic_sufficient,
    reception_criterion,
)
from .certify import (
    CertificationReport,
    certify,
    classify_case,
    critical_bound,
    monotone_threshold,
    verify_sign_monotone,
)
from .config import ConfigError, load_config
from .model import (
    Channel,
    GainBounds,
    LoopState,
    PerformanceSpec,
    ScalarSystem,
    TraceRecord,
    VectorSystem,
    initial_state,
    performance_gap,
    plant_step,
    validate_assumptions,
)
from .policies import (
    AlwaysTransmitPolicy,
    EventTriggeredPolicy,
    NominalPolicy,
    PeriodicPolicy,
    PolicyDecision,
    VectorBoundInputs,
    VectorEventTriggeredPolicy,
    norm_gap_bound,
    norm_lookahead_bound,
    norm_reception_bound,
)
from .sim import (
    EnsembleStats,
    PolicySpec,
    RunConfig,
    objective_check,
    run_ensemble,
    run_trajectory,
    sample_reception,
    series_criterion,
    series_norm_criterion,
    tail_fraction,
    tower_residuals,
)

__version__ = "0.1.0"

__all__ = [
    "AlwaysTransmitPolicy",
    "CertificationReport",
    "Channel",
    "ConfigError",
    "EnsembleStats",
    "EventTriggeredPolicy",
    "GainBounds",
    "LookaheadInputs",
    "LoopState",
    "NominalPolicy",
    "PerformanceSpec",
    "PeriodicPolicy",
    "PolicyDecision",
    "PolicySpec",
    "RunConfig",
    "ScalarSystem",
    "SeriesDivergenceError",
    "TraceRecord",
    "VectorBoundInputs",
    "VectorEventTriggeredPolicy",
    "VectorSystem",
    "certify",
    "classify_case",
    "criterion_upper_bound",
    "critical_bound",
    "envelope_steps_left",
    "geometric_factor",
    "initial_state",
    "load_config",
    "lookahead_criterion",
    "max_sufficient_period",
    "monotone_threshold",
    "norm_gap_bound",
    "norm_lookahead_bound",
    "norm_reception_bound",
    "objective_check",
    "open_loop_performance",
    "performance_gap",
    "periodic_sufficient",
    "plant_step",
    "reception_criterion",
    "run_ensemble",
    "run_trajectory",
    "sample_reception",
    "series_criterion",
    "series_norm_criterion",
    "tail_fraction",
    "tower_residuals",
    "validate_assumptions",
    "verify_sign_monotone",
]
