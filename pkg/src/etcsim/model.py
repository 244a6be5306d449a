"""Plant, estimator, channel, and performance definitions.

The control loop simulated here is a discrete-time linear plant whose
sensor talks to the controller over a lossy link.  At each step the
sensor may transmit the current state; the packet arrives with
probability p (Bernoulli drops, i.i.d. across steps).  The controller
holds an estimate that is corrected on every successful reception and
propagated open-loop otherwise.  Performance is judged against an
exponentially decaying envelope: the squared state should stay below
max{c^(2k') * x_R^2, B} where x_R is the state at the last reception,
k' the steps elapsed since, and B the ultimate bound.

Two plant flavors share one surface: a scalar plant (exact closed forms
downstream) and a vector plant (norm-based upper bounds downstream).
Everything in this module is a plain value type or a pure function, so
independent trajectories can run in parallel without shared state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "ScalarSystem",
    "VectorSystem",
    "System",
    "GainBounds",
    "Channel",
    "PerformanceSpec",
    "LoopState",
    "TraceRecord",
    "AssumptionCheck",
    "AssumptionReport",
    "IDLE",
    "TRANSMIT",
    "validate_assumptions",
    "initial_state",
    "plant_step",
    "performance_gap",
    "state_sq",
]

# Policy phases recorded in LoopState / traces.
IDLE = "IDLE"
TRANSMIT = "TRANSMIT"


@dataclass(frozen=True)
class GainBounds:
    """Scalar summary of a system: drift gain, closed-loop gain, noise ratio.

    For a scalar plant these are |a|, |a+L|, M/(a^2-1).  For a vector
    plant they are the spectral norms of A and A+QL and
    trace(Sigma)/(norm(A)^2-1).  All of the analytic machinery that only
    needs these three numbers accepts either a system or this view.
    """

    a: float
    a_bar: float
    M_bar: float


@dataclass(frozen=True)
class ScalarSystem:
    """x_{k+1} = a*x_k + u_k + v_k with state feedback u_k = L*xhat_k^+.

    The closed-loop gain is a_bar = a + L.  The process noise v_k has
    mean zero and variance M; the default sampler downstream is
    Gaussian but only the first two moments matter to the analysis.
    """

    a: float  # open-loop drift, |a| > 1 in the regime of interest
    L: float  # control gain
    M: float  # process-noise variance

    @classmethod
    def from_closed_loop(cls, a: float, a_bar: float, M: float) -> "ScalarSystem":
        '''Build from the closed-loop gain instead of the control gain.'''
        return cls(a=a, L=a_bar - a, M=M)

    @property
    def a_bar(self) -> float:
        return self.a + self.L

    @property
    def M_bar(self) -> float:
        """Noise-to-instability ratio M/(a^2 - 1); needs |a| > 1."""
        return self.M / (self.a * self.a - 1.0)

    def gain_bounds(self) -> GainBounds:
        '''Norm view: |a|, |a_bar|, M_bar.'''
        return GainBounds(abs(self.a), abs(self.a_bar), self.M_bar)

    def step_state(self, x: float, e_plus: float, v: float) -> float:
        '''One plant step given the post-reception error: a_bar*x - L*e^+ + v.'''
        return self.a_bar * x - self.L * e_plus + v

    def step_estimate(self, x_hat_plus: float) -> float:
        '''Open-loop estimate propagation: a_bar * xhat^+.'''
        return self.a_bar * x_hat_plus


def _spectral_norm(A: np.ndarray) -> float:
    # Largest singular value via a symmetric eigensolve of A^T A.  The
    # matrices here are tiny, so eigvalsh is both exact enough (relative
    # error at the eigensolver's 1e-12 scale) and cheap.
    return math.sqrt(float(np.linalg.eigvalsh(A.T @ A)[-1]))


@dataclass(frozen=True)
class VectorSystem:
    """x_{k+1} = A x_k + Q u_k + v_k with u_k = L xhat_k^+, cov(v) = Sigma."""

    A: np.ndarray      # n x n drift
    Q: np.ndarray      # n x m input map
    L: np.ndarray      # m x n gain
    Sigma: np.ndarray  # n x n noise covariance, symmetric PSD
    A_bar: np.ndarray = field(init=False, repr=False)
    norm_A: float = field(init=False)
    norm_A_bar: float = field(init=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        L = np.asarray(self.L, dtype=float)
        Sigma = np.asarray(self.Sigma, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "A_bar", A + Q @ L)
        object.__setattr__(self, "norm_A", _spectral_norm(A))
        object.__setattr__(self, "norm_A_bar", _spectral_norm(self.A_bar))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def M_bar(self) -> float:
        """trace(Sigma)/(norm(A)^2 - 1); needs norm(A) > 1."""
        return float(np.trace(self.Sigma)) / (self.norm_A ** 2 - 1.0)

    def gain_bounds(self) -> GainBounds:
        '''Norm view used by the analytic and certification layers.'''
        return GainBounds(self.norm_A, self.norm_A_bar, self.M_bar)

    def step_state(self, x: np.ndarray, e_plus: np.ndarray, v: np.ndarray) -> np.ndarray:
        '''One plant step: A_bar x - QL e^+ + v (same algebra as the scalar case).'''
        return self.A_bar @ x - self.Q @ self.L @ e_plus + v

    def step_estimate(self, x_hat_plus: np.ndarray) -> np.ndarray:
        return self.A_bar @ x_hat_plus


System = Union[ScalarSystem, VectorSystem]
State = Union[float, np.ndarray]


@dataclass(frozen=True)
class Channel:
    """Bernoulli packet-drop link: transmissions arrive with probability p."""

    p: float  # success probability, 0 < p <= 1 for the theory to apply


@dataclass(frozen=True)
class PerformanceSpec:
    """Target envelope: squared state under max{c^(2k') x_R^2, B}."""

    c: float  # decay rate of the envelope, in (0, 1)
    B: float  # ultimate bound on the squared state
    D: int    # look-ahead horizon / silent prefix of the nominal schedule


def state_sq(x: State) -> float:
    '''Squared magnitude of a state: x*x for scalars, x.x for vectors.'''
    if isinstance(x, np.ndarray):
        return float(np.dot(x, x))
    return float(x) * float(x)


@dataclass(frozen=True, slots=True)
class LoopState:
    """Snapshot of one closed-loop trajectory at step k.

    x_hat is the estimate before the step-k reception outcome; the
    *_plus fields reflect the latest processed reception, so right
    after plant_step they coincide with the no-reception values and
    are finalized inside the next plant_step call once r_k is known.
    R_k is the latest reception time strictly accounted before k (the
    convention S_0 = 0 seeds it), and x_at_R the state recorded then.
    """

    k: int
    x: State
    x_hat: State
    x_hat_plus: State
    e: State
    e_plus: State
    R_k: int
    R_k_plus: int
    x_at_R: State
    mode: str = IDLE

    @property
    def elapsed(self) -> int:
        '''Steps since the last reception.'''
        return self.k - self.R_k


@dataclass(frozen=True, slots=True)
class TraceRecord:
    '''One row of a trajectory log.'''

    k: int
    x: State
    t: int            # transmission decision
    r: int            # reception outcome (r=1 implies t=1)
    h: float          # performance gap at this step
    trigger: float | None  # look-ahead value when the policy evaluated one


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple[AssumptionCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[AssumptionCheck]:
        return [c for c in self.checks if not c.passed]

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            lines.append(f"  [{'ok' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        lines.append(f"  overall: {'pass' if self.ok else 'fail'}")
        return "\n".join(lines)


def validate_assumptions(sys: System, spec: PerformanceSpec, ch: Channel) -> AssumptionReport:
    """Check the standing assumptions and report each condition separately.

    This is a report, not a gate: out-of-range parameters are still
    representable (useful for probing failure modes), and callers decide
    what to do with a failing report.
    """
    g = sys.gain_bounds()
    a, a_bar = g.a, g.a_bar
    checks = [
        AssumptionCheck(
            "channel_success_probability",
            0.0 < ch.p <= 1.0,
            f"p = {ch.p} must lie in (0, 1]",
        ),
        AssumptionCheck(
            "unstable_drift",
            a > 1.0,
            f"|a| = {a} must exceed 1 (stable plants need no scheduling)",
        ),
        AssumptionCheck(
            "closed_loop_beats_rate",
            a_bar * a_bar < spec.c * spec.c < 1.0,
            f"a_bar^2 = {a_bar * a_bar:.6g} < c^2 = {spec.c * spec.c:.6g} < 1 required",
        ),
        AssumptionCheck(
            "drop_rate_vs_drift",
            a * a * (1.0 - ch.p) < 1.0,
            f"a^2 (1-p) = {a * a * (1.0 - ch.p):.6g} must stay below 1",
        ),
        AssumptionCheck(
            "noise_positive",
            _noise_ok(sys),
            "process noise must have positive total variance and a valid covariance",
        ),
        AssumptionCheck(
            "bound_nonnegative",
            spec.B >= 0.0,
            f"B = {spec.B} must be >= 0",
        ),
        AssumptionCheck(
            "horizon_positive",
            spec.D >= 1,
            f"D = {spec.D} must be >= 1",
        ),
    ]
    return AssumptionReport(tuple(checks))


def _noise_ok(sys: System) -> bool:
    if isinstance(sys, ScalarSystem):
        return sys.M > 0.0
    Sigma = sys.Sigma
    if not np.allclose(Sigma, Sigma.T, rtol=1e-10, atol=1e-12):
        return False
    eigs = np.linalg.eigvalsh(Sigma)
    return bool(eigs[-1] > 0.0 and eigs[0] >= -1e-12 * max(1.0, eigs[-1]))


def initial_state(x0: State) -> LoopState:
    """State at k=0 after the conventional forced reception.

    Trajectories start with a successful transmission at step 0, so the
    estimate is exact, both errors are zero, and the reception
    bookkeeping points at step 0 itself.
    """
    if isinstance(x0, np.ndarray):
        x0 = np.asarray(x0, dtype=float)
        zero: State = np.zeros_like(x0)
        xc: State = x0.copy()
    else:
        x0 = float(x0)
        zero = 0.0
        xc = x0
    return LoopState(
        k=0, x=xc, x_hat=xc, x_hat_plus=xc, e=zero, e_plus=zero,
        R_k=0, R_k_plus=0, x_at_R=xc, mode=IDLE,
    )


def plant_step(state: LoopState, sys: System, v: State, r_k: int,
               mode: str = IDLE) -> LoopState:
    """Apply the step-k reception outcome and advance the plant to k+1.

    With r_k = 1 the estimate snaps to the true state before the
    controller acts; with r_k = 0 it keeps its open-loop value.  The
    returned snapshot's *_plus fields are the pending (no-reception)
    values for step k+1.
    """
    if r_k:
        x_hat_plus = state.x
        e_plus = _zero_like(state.x)
        r_time = state.k
        x_at_r = state.x
    else:
        x_hat_plus = state.x_hat_plus
        e_plus = state.x - x_hat_plus
        r_time = state.R_k_plus
        x_at_r = state.x_at_R

    x_next = sys.step_state(state.x, e_plus, v)
    x_hat_next = sys.step_estimate(x_hat_plus)
    e_next = x_next - x_hat_next
    return LoopState(
        k=state.k + 1,
        x=x_next,
        x_hat=x_hat_next,
        x_hat_plus=x_hat_next,
        e=e_next,
        e_plus=e_next,
        R_k=r_time,
        R_k_plus=r_time,
        x_at_R=x_at_r,
        mode=mode,
    )


def _zero_like(x: State) -> State:
    if isinstance(x, np.ndarray):
        return np.zeros_like(x)
    return 0.0


def performance_gap(state: LoopState, spec: PerformanceSpec) -> float:
    """Excess of the squared state over the performance envelope.

    h_k = x_k^2 - max{c^(2(k - R_k)) x_R^2, B}.  Negative means the
    state is inside the envelope.  At k = R_k (only the forced step 0
    in practice) the envelope starts at max{x_0^2, B}.
    """
    elapsed = state.k - state.R_k
    envelope = max(spec.c ** (2 * elapsed) * state_sq(state.x_at_R), spec.B)
    return state_sq(state.x) - envelope
