"""Transmission policies and the norm-based bounds behind the vector trigger.

Every policy answers one question each step: given what the sensor
knows before the channel outcome (the state history and past
receptions, never the current draw), should it transmit.  Five
implementations share that contract:

  * `AlwaysTransmitPolicy` and `PeriodicPolicy` ignore the state.
  * `NominalPolicy` stays silent for a fixed window after an anchor
    step and then transmits forever; it exists as the reference
    schedule that the look-ahead criterion reasons about and as a
    cross-check for the series oracle in `sim`.
  * `EventTriggeredPolicy` runs a two-mode machine around the scalar
    look-ahead criterion.
  * `VectorEventTriggeredPolicy` runs the same machine around the
    norm-based criterion built here from `norm_gap_bound`.

The vector bounds replace the exact scalar conditional moments with
triangle-inequality envelopes in ||x||, ||e||: every cross term enters
with a positive sign, so each bound dominates the true expectation and
a trigger built on it fires no later than an exact one would.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .analytic import (
    LookaheadInputs,
    envelope_steps_left,
    geometric_factor,
    lookahead_criterion,
    open_loop_performance,
    reception_criterion,
)
from .model import (
    IDLE,
    TRANSMIT,
    Channel,
    GainBounds,
    LoopState,
    PerformanceSpec,
    ScalarSystem,
    VectorSystem,
)

__all__ = [
    "PolicyDecision",
    "Policy",
    "AlwaysTransmitPolicy",
    "PeriodicPolicy",
    "NominalPolicy",
    "EventTriggeredPolicy",
    "VectorEventTriggeredPolicy",
    "VectorBoundInputs",
    "norm_gap_bound",
    "norm_gap_bound_post",
    "norm_lookahead_bound",
    "norm_reception_bound",
]


@dataclass(frozen=True)
class PolicyDecision:
    """Outcome of one decision step.

    transmit is the binary schedule bit.  trigger_value carries the
    criterion the policy evaluated to reach it, when it evaluated one;
    forced steps and mode-held steps leave it as None.
    """

    transmit: int
    trigger_value: float | None = None


class Policy:
    """Decision contract shared by all schedules.

    decide() may read only the pre-channel view of the loop state (x,
    x_hat, e, R_k, x_at_R and the step index), never the *_plus
    fields, because the current reception outcome is not part of the
    sensor's information when it decides.  Policies carry their mode
    as mutable state, so one instance drives exactly one trajectory;
    notify_reception feeds the channel outcome back afterwards.
    """

    def decide(self, state: LoopState) -> PolicyDecision:
        raise NotImplementedError

    def notify_reception(self, r_k: int) -> None:
        '''Called after every step with the realized reception bit.'''


class AlwaysTransmitPolicy(Policy):
    '''Transmit at every step.'''

    def decide(self, state: LoopState) -> PolicyDecision:
        return PolicyDecision(1)


class PeriodicPolicy(Policy):
    '''Transmit whenever the step index is a multiple of the period.'''

    def __init__(self, period: int):
        if period < 1:
            raise ValueError("period must be a positive integer")
        self.period = int(period)

    def decide(self, state: LoopState) -> PolicyDecision:
        return PolicyDecision(1 if state.k % self.period == 0 else 0)


class NominalPolicy(Policy):
    """Silent for `quiet_steps` steps starting at `anchor`, then always on.

    This is the reference schedule the look-ahead criterion averages
    over: no transmissions during the window, then transmit every step
    until a reception lands.
    """

    def __init__(self, anchor: int, quiet_steps: int):
        if quiet_steps < 0:
            raise ValueError("quiet window cannot be negative")
        self.anchor = int(anchor)
        self.quiet_steps = int(quiet_steps)

    def decide(self, state: LoopState) -> PolicyDecision:
        if state.k < self.anchor:
            raise ValueError("nominal schedule queried before its anchor step")
        return PolicyDecision(0 if state.k < self.anchor + self.quiet_steps else 1)


class _TwoModeTrigger(Policy):
    """Shared machine for the event-triggered policies.

    IDLE evaluates the criterion; a non-negative value switches to
    TRANSMIT and emits 1.  TRANSMIT emits 1 unconditionally, without
    re-evaluating, until notify_reception(1) resets to IDLE.  The hold
    is deliberate: the schedule commits to transmitting over a whole
    interval once triggered, so a criterion that dips negative while
    packets are still being dropped does not silence it.
    """

    def __init__(self) -> None:
        self.mode = IDLE

    def _criterion(self, state: LoopState) -> float:
        raise NotImplementedError

    def decide(self, state: LoopState) -> PolicyDecision:
        if self.mode == TRANSMIT:
            return PolicyDecision(1)
        value = self._criterion(state)
        if value >= 0.0:
            self.mode = TRANSMIT
            return PolicyDecision(1, value)
        return PolicyDecision(0, value)

    def notify_reception(self, r_k: int) -> None:
        if r_k:
            self.mode = IDLE


class EventTriggeredPolicy(_TwoModeTrigger):
    '''Scalar event trigger: transmit once the look-ahead criterion clears zero.'''

    def __init__(self, sys: ScalarSystem, spec: PerformanceSpec, ch: Channel,
                 horizon: int | None = None):
        super().__init__()
        self.sys = sys
        self.spec = spec
        self.ch = ch
        self.horizon = spec.D if horizon is None else int(horizon)

    def _criterion(self, state: LoopState) -> float:
        inputs = LookaheadInputs(
            x=float(state.x),
            e=float(state.e),
            elapsed=state.elapsed,
            x_at_R_sq=float(state.x_at_R) ** 2,
        )
        return lookahead_criterion(inputs, self.sys, self.spec, self.ch,
                                   self.horizon)


class VectorEventTriggeredPolicy(_TwoModeTrigger):
    '''Vector event trigger: same machine around the norm-based criterion.'''

    def __init__(self, sys: VectorSystem, spec: PerformanceSpec, ch: Channel,
                 horizon: int | None = None):
        super().__init__()
        self.sys = sys
        self.gains = sys.gain_bounds()
        self.spec = spec
        self.ch = ch
        self.horizon = spec.D if horizon is None else int(horizon)

    def _criterion(self, state: LoopState) -> float:
        x = np.asarray(state.x, dtype=float)
        e = np.asarray(state.e, dtype=float)
        x_r = np.asarray(state.x_at_R, dtype=float)
        inputs = VectorBoundInputs(
            norm_x=float(np.linalg.norm(x)),
            norm_e=float(np.linalg.norm(e)),
            elapsed=state.elapsed,
            x_at_R_sq=float(x_r @ x_r),
        )
        return norm_lookahead_bound(inputs, self.gains, self.spec, self.ch,
                                    self.horizon)


@dataclass(frozen=True, slots=True)
class VectorBoundInputs:
    '''Norm summary of the loop state feeding the vector bounds.'''

    norm_x: float
    norm_e: float
    elapsed: int
    x_at_R_sq: float

    def __post_init__(self):
        if self.norm_x < 0.0 or self.norm_e < 0.0 or self.x_at_R_sq < 0.0:
            raise ValueError("norms and squared norms cannot be negative")


def _gains(sys: VectorSystem | GainBounds) -> GainBounds:
    return sys.gain_bounds() if isinstance(sys, VectorSystem) else sys


def norm_gap_bound(s: int, inputs: VectorBoundInputs,
                   sys: VectorSystem | GainBounds,
                   spec: PerformanceSpec) -> float:
    """Upper bound on the expected performance gap s steps ahead with no
    receptions in between.

    Built from ||A^s|| <= alpha^s, ||A^s - Abar^s|| <= alpha^s + beta^s
    and the trace of the noise covariance, so every term is an
    overestimate of the exact conditional moment:

        beta^(2s) ||x||^2 + 2 beta^s (alpha^s + beta^s) ||x|| ||e||
        + (alpha^s + beta^s)^2 ||e||^2 + M_bar (alpha^(2s) - 1)
        - max{c^(2(elapsed+s)) x_R^T x_R, B}.
    """
    g = _gains(sys)
    al_s = g.a ** s
    be_s = g.a_bar ** s
    cross = al_s + be_s
    envelope = spec.c ** (2 * (inputs.elapsed + s)) * inputs.x_at_R_sq
    return (
        be_s * be_s * inputs.norm_x ** 2
        + 2.0 * be_s * cross * inputs.norm_x * inputs.norm_e
        + cross * cross * inputs.norm_e ** 2
        + g.M_bar * (al_s * al_s - 1.0)
        - max(envelope, spec.B)
    )


def norm_gap_bound_post(s: int, x_sq: float,
                        sys: VectorSystem | GainBounds,
                        spec: PerformanceSpec) -> float:
    """Same bound evaluated right after a reception, where the estimation
    error is zero and the envelope re-anchors at the current state; only
    the squared norm of that state enters."""
    return open_loop_performance(s, x_sq, _gains(sys), spec)


@lru_cache(maxsize=512)
def _norm_terms(g: GainBounds, c: float, p: float, horizon: int):
    '''Geometric factors of the norm-based criterion, cached per policy.'''
    g_bb = geometric_factor(g.a_bar * g.a_bar, p, horizon)
    g_ab = geometric_factor(g.a * g.a_bar, p, horizon)
    g_aa = geometric_factor(g.a * g.a, p, horizon)
    g_cc = geometric_factor(c * c, p, horizon)
    return g_bb, g_ab, g_aa, g_cc


def norm_lookahead_bound(inputs: VectorBoundInputs,
                         sys: VectorSystem | GainBounds,
                         spec: PerformanceSpec, ch: Channel,
                         horizon: int | None = None) -> float:
    """Closed form of the norm-based look-ahead criterion.

    Sums norm_gap_bound over the reception time of the reference
    schedule, exactly as `analytic.lookahead_criterion` does for the
    exact scalar moments.  The geometric factors involve the bases
    beta^2, alpha*beta, alpha^2 and c^2; any of them with base*(1-p)
    >= 1 makes the series diverge and raises.
    """
    g = _gains(sys)
    D = spec.D if horizon is None else int(horizon)
    p = ch.p
    g_bb, g_ab, g_aa, g_cc = _norm_terms(g, spec.c, p, D)
    q = envelope_steps_left(inputs.x_at_R_sq, inputs.elapsed, D, spec)
    z = spec.c ** (2 * inputs.elapsed) * inputs.x_at_R_sq
    return p * (
        g_bb * inputs.norm_x ** 2
        + 2.0 * (g_ab + g_bb) * inputs.norm_x * inputs.norm_e
        + (g_aa + 2.0 * g_ab + g_bb) * inputs.norm_e ** 2
        + g.M_bar * (g_aa - 1.0 / p)
        - g_cc * z
        - (spec.B / p - spec.c ** (2 * q) * g_cc * z) * (1.0 - p) ** q
    )


def norm_reception_bound(x_sq: float, sys: VectorSystem | GainBounds,
                         spec: PerformanceSpec, ch: Channel,
                         horizon: int | None = None) -> float:
    """Norm-based criterion right after a reception.

    Identical in form to the scalar post-reception criterion with the
    drift and closed-loop gains replaced by the spectral norms, so it
    simply delegates to `analytic.reception_criterion` on the norm
    summary.
    """
    return reception_criterion(x_sq, _gains(sys), spec, ch, horizon)
