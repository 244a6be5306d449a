"""Trajectory simulation, seeded ensembles, and independent oracles.

The simulator composes the pieces the other modules define: a plant, a
channel, a policy, and a performance envelope.  Each run is driven by
two counter-based RNG streams derived from (root seed, run index), one
for process noise and one for the channel, so trajectories are
reproducible bit for bit no matter how the ensemble is scheduled, and
so a policy that transmits less never shifts the noise sequence.

The module also hosts the slow-but-simple oracles used to validate the
closed forms elsewhere: direct summation of the criterion series, a
conditional-expectation audit of the one-step tower property, and the
empirical objective check that compares ensemble means against the
deterministic envelope.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analytic import (
    LookaheadInputs,
    SeriesDivergenceError,
    lookahead_criterion,
    lookahead_criterion_moments,
    reception_criterion,
)
from .model import (
    Channel,
    GainBounds,
    PerformanceSpec,
    ScalarSystem,
    State,
    System,
    TraceRecord,
    VectorSystem,
    initial_state,
    performance_gap,
    plant_step,
    state_sq,
)
from .policies import (
    AlwaysTransmitPolicy,
    EventTriggeredPolicy,
    NominalPolicy,
    PeriodicPolicy,
    Policy,
    VectorBoundInputs,
    VectorEventTriggeredPolicy,
    norm_gap_bound,
)

__all__ = [
    "POLICY_KINDS",
    "PolicySpec",
    "RunConfig",
    "EnsembleStats",
    "ObjectiveResult",
    "TowerResiduals",
    "stream_rng",
    "sample_reception",
    "run_trajectory",
    "run_ensemble",
    "envelope_bound",
    "series_criterion",
    "series_norm_criterion",
    "tail_fraction",
    "tower_residuals",
    "objective_check",
]

# Stream indices within a run's seed space.  Keeping noise and channel
# draws on separate streams means the channel's variable draw count
# (silent steps draw nothing) never perturbs the noise sequence.
_NOISE_STREAM = 0
_CHANNEL_STREAM = 1

# Ensemble runs are summed in fixed-size chunks, and chunk partials are
# merged in index order, so the floating-point result is independent of
# how many workers processed them.
_CHUNK_RUNS = 64

POLICY_KINDS = ("event", "event_vector", "periodic", "always", "nominal")


def stream_rng(seed: int, run_index: int, stream: int) -> np.random.Generator:
    """Counter-based generator for one (run, stream) pair.

    Philox with a spawn key gives independent streams for every
    combination without any sequential state handed between runs.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(run_index, stream))
    return np.random.Generator(np.random.Philox(ss))


def sample_reception(t_k: int, ch: Channel, rng: np.random.Generator) -> int:
    """Channel outcome for one step: silent steps consume no randomness,
    transmissions arrive with probability p."""
    if t_k not in (0, 1):
        raise ValueError("transmission decision must be 0 or 1")
    if t_k == 0:
        return 0
    return 1 if rng.random() < ch.p else 0


@dataclass(frozen=True)
class PolicySpec:
    """Declarative policy selection; build() makes a fresh instance.

    A policy instance carries mutable mode, so every trajectory gets its
    own via build().  `horizon` overrides the look-ahead of the event
    policies and doubles as the quiet-window length of the nominal
    schedule; it defaults to the envelope's D.
    """

    kind: str
    period: int | None = None
    anchor: int = 0
    horizon: int | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(
                f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}"
            )
        if self.kind == "periodic" and (self.period is None or self.period < 1):
            raise ValueError("periodic policy needs a period >= 1")

    def build(self, sys: System, spec: PerformanceSpec, ch: Channel) -> Policy:
        if self.kind == "always":
            return AlwaysTransmitPolicy()
        if self.kind == "periodic":
            return PeriodicPolicy(self.period)
        if self.kind == "nominal":
            quiet = spec.D if self.horizon is None else self.horizon
            return NominalPolicy(self.anchor, quiet)
        if self.kind == "event":
            if not isinstance(sys, ScalarSystem):
                raise ValueError("the scalar event policy needs a scalar system; "
                                 "use kind 'event_vector' for vector plants")
            return EventTriggeredPolicy(sys, spec, ch, self.horizon)
        if not isinstance(sys, VectorSystem):
            raise ValueError("the vector event policy needs a vector system")
        return VectorEventTriggeredPolicy(sys, spec, ch, self.horizon)


@dataclass(frozen=True)
class RunConfig:
    '''Everything one experiment needs, including its root seed.'''

    system: System
    spec: PerformanceSpec
    channel: Channel
    policy: PolicySpec
    x0: State
    horizon: int
    n_runs: int
    seed: int
    noise: str = "gaussian"  # "none" zeroes the process noise (test harness)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.noise not in ("gaussian", "none"):
            raise ValueError("noise must be 'gaussian' or 'none'")


def _noise_sampler(cfg: RunConfig, rng: np.random.Generator):
    if cfg.noise == "none":
        if isinstance(cfg.system, VectorSystem):
            zero = np.zeros(cfg.system.n)
            return lambda: zero
        return lambda: 0.0
    if isinstance(cfg.system, VectorSystem):
        chol = np.linalg.cholesky(cfg.system.Sigma)
        dim = cfg.system.n
        return lambda: chol @ rng.standard_normal(dim)
    sd = math.sqrt(cfg.system.M)
    return lambda: rng.normal(0.0, sd)


def _simulate_run(cfg: RunConfig, run_index: int, collect_trace: bool):
    """One closed-loop trajectory; returns per-step arrays and, on
    request, the full trace.

    Step 0 is the conventional forced transmission and reception; the
    policy starts deciding at step 1.
    """
    sys_, spec, ch = cfg.system, cfg.spec, cfg.channel
    policy = cfg.policy.build(sys_, spec, ch)
    draw_noise = _noise_sampler(cfg, stream_rng(cfg.seed, run_index, _NOISE_STREAM))
    chan_rng = stream_rng(cfg.seed, run_index, _CHANNEL_STREAM)

    state = initial_state(cfg.x0)
    H = cfg.horizon
    x2 = np.empty(H + 1)
    h = np.empty(H + 1)
    t = np.zeros(H + 1, dtype=np.int64)
    r = np.zeros(H + 1, dtype=np.int64)
    x2[0] = state_sq(state.x)
    h[0] = performance_gap(state, spec)
    t[0] = r[0] = 1
    trace = [TraceRecord(0, state.x, 1, 1, h[0], None)] if collect_trace else None

    r_prev = 1
    for k in range(1, H + 1):
        state = plant_step(state, sys_, draw_noise(), r_prev)
        decision = policy.decide(state)
        t_k = decision.transmit
        r_k = sample_reception(t_k, ch, chan_rng)
        policy.notify_reception(r_k)
        x2[k] = state_sq(state.x)
        h[k] = performance_gap(state, spec)
        t[k] = t_k
        r[k] = r_k
        if collect_trace:
            trace.append(TraceRecord(k, state.x, t_k, r_k, h[k],
                                     decision.trigger_value))
        r_prev = r_k
    return x2, h, t, r, trace


def run_trajectory(cfg: RunConfig, run_index: int = 0) -> list[TraceRecord]:
    '''Full trace of a single run, deterministic in (seed, run_index).'''
    return _simulate_run(cfg, run_index, collect_trace=True)[4]


def envelope_bound(spec: PerformanceSpec, x0: State, horizon: int) -> np.ndarray:
    '''The deterministic objective envelope max{c^(2k) x0^2, B} per step.'''
    k = np.arange(horizon + 1)
    return np.maximum(spec.c ** (2 * k) * state_sq(x0), spec.B)


@dataclass(frozen=True)
class EnsembleStats:
    """Per-step ensemble means plus transmission accounting.

    frac[k] is the running transmission fraction over the k decided
    steps 1..k, averaged over runs; the forced step-0 transmission is
    not a decision and enters neither numerator nor denominator, so
    frac[0] = 0 by convention.
    """

    mean_x2: np.ndarray
    mean_h: np.ndarray
    frac: np.ndarray
    bound: np.ndarray
    n_runs: int
    transmissions: int
    receptions: int


class _Accumulator:
    '''Order-insensitive sums over runs; mergeable across chunks.'''

    def __init__(self, horizon: int):
        self.sum_x2 = np.zeros(horizon + 1)
        self.sum_h = np.zeros(horizon + 1)
        self.sum_frac = np.zeros(horizon + 1)
        self.n = 0
        self.tx = 0
        self.rx = 0

    def add_run(self, x2, h, t, r):
        self.sum_x2 += x2
        self.sum_h += h
        decided = np.cumsum(t) - t[0]
        steps = np.arange(len(t))
        steps[0] = 1  # frac[0] is 0/1 = 0, never 0/0
        self.sum_frac += decided / steps
        self.n += 1
        self.tx += int(t.sum())
        self.rx += int(r.sum())

    def merge(self, other: "_Accumulator"):
        self.sum_x2 += other.sum_x2
        self.sum_h += other.sum_h
        self.sum_frac += other.sum_frac
        self.n += other.n
        self.tx += other.tx
        self.rx += other.rx

    def finalize(self, bound: np.ndarray) -> EnsembleStats:
        return EnsembleStats(
            mean_x2=self.sum_x2 / self.n,
            mean_h=self.sum_h / self.n,
            frac=self.sum_frac / self.n,
            bound=bound,
            n_runs=self.n,
            transmissions=self.tx,
            receptions=self.rx,
        )


def _chunk_sums(cfg: RunConfig, start: int, stop: int) -> _Accumulator:
    acc = _Accumulator(cfg.horizon)
    for run_index in range(start, stop):
        x2, h, t, r, _ = _simulate_run(cfg, run_index, collect_trace=False)
        acc.add_run(x2, h, t, r)
    return acc


def _chunk_worker(args):
    return _chunk_sums(*args)


def _resolve_processes(processes: int | None) -> int:
    if processes is not None:
        return max(1, int(processes))
    env = os.environ.get("ETCSIM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_ensemble(cfg: RunConfig, processes: int | None = None) -> EnsembleStats:
    """Monte-Carlo ensemble of independent runs.

    Deterministic for a given config: run i always sees the same RNG
    streams, and chunk partial sums are merged in index order, so the
    result is bit-identical whether computed serially or with a process
    pool (ETCSIM_THREADS, or the `processes` argument, sets the width).
    """
    chunks = [(cfg, lo, min(lo + _CHUNK_RUNS, cfg.n_runs))
              for lo in range(0, cfg.n_runs, _CHUNK_RUNS)]
    procs = min(_resolve_processes(processes), len(chunks))
    if procs > 1:
        with ProcessPoolExecutor(max_workers=procs) as pool:
            partials = list(pool.map(_chunk_worker, chunks))
    else:
        partials = [_chunk_sums(*chunk) for chunk in chunks]
    total = partials[0]
    for part in partials[1:]:
        total.merge(part)
    return total.finalize(envelope_bound(cfg.spec, cfg.x0, cfg.horizon))


def series_criterion(inputs: LookaheadInputs, sys: ScalarSystem | GainBounds,
                     spec: PerformanceSpec, ch: Channel,
                     horizon: int | None = None, tol: float = 1e-12) -> float:
    """Direct-summation oracle for the look-ahead criterion.

    Sums E[gap at the reception time] over the geometric reception law
    term by term, with the inner expectation evaluated from the exact
    one-silent-interval moments: the state mean propagates through the
    closed loop, the error mean through the open loop, and the noise
    adds M_bar (a^(2s) - 1) of variance.  Truncates once a geometric
    bound on the remaining tail drops below tol.  Deliberately naive;
    this is the reference the closed form is tested against.
    """
    D = spec.D if horizon is None else int(horizon)
    p = ch.p
    a, ab, M_bar = sys.a, sys.a_bar, sys.M_bar
    x, e = inputs.x, inputs.e
    rho = a * a * (1.0 - p)
    if rho >= 1.0:
        raise SeriesDivergenceError(
            f"series tail ratio a^2 (1-p) = {rho:.6g} >= 1")
    # Everything in the summand is dominated by K a^(2s) plus the
    # envelope, which never exceeds max(anchor, B).
    K = (abs(x) + 2.0 * abs(e)) ** 2 + M_bar
    env_cap = max(inputs.x_at_R_sq, spec.B)

    total = 0.0
    s = D
    while True:
        mean_x = ab ** s * x + (a ** s - ab ** s) * e
        var_x = M_bar * (a ** (2 * s) - 1.0)
        envelope = max(
            spec.c ** (2 * (inputs.elapsed + s)) * inputs.x_at_R_sq, spec.B)
        inner = mean_x * mean_x + var_x - envelope
        total += p * (1.0 - p) ** (s - D) * inner
        if p >= 1.0:
            return total
        tail = (1.0 - p) ** (s + 1 - D) * (
            p * K * a ** (2 * (s + 1)) / (1.0 - rho) + env_cap + spec.B)
        if tail < tol:
            return total
        s += 1
        if s - D > 1_000_000:
            raise RuntimeError("series truncation failed to converge")


def series_norm_criterion(inputs: VectorBoundInputs,
                          sys: VectorSystem | GainBounds,
                          spec: PerformanceSpec, ch: Channel,
                          horizon: int | None = None,
                          tol: float = 1e-12) -> float:
    '''Direct-summation oracle for the norm-based look-ahead bound.'''
    gains = sys.gain_bounds() if isinstance(sys, VectorSystem) else sys
    D = spec.D if horizon is None else int(horizon)
    p = ch.p
    al = gains.a
    rho = al * al * (1.0 - p)
    if rho >= 1.0:
        raise SeriesDivergenceError(
            f"series tail ratio |A|^2 (1-p) = {rho:.6g} >= 1")
    K = (inputs.norm_x + 2.0 * inputs.norm_e) ** 2 + gains.M_bar
    env_cap = max(inputs.x_at_R_sq, spec.B)

    total = 0.0
    s = D
    while True:
        total += p * (1.0 - p) ** (s - D) * norm_gap_bound(s, inputs, gains, spec)
        if p >= 1.0:
            return total
        tail = (1.0 - p) ** (s + 1 - D) * (
            p * K * al ** (2 * (s + 1)) / (1.0 - rho) + env_cap + spec.B)
        if tail < tol:
            return total
        s += 1
        if s - D > 1_000_000:
            raise RuntimeError("series truncation failed to converge")


@dataclass(frozen=True)
class TowerResiduals:
    """Differences between the conditional expectation of tomorrow's
    criterion and today's criterion one horizon deeper, per channel
    branch.  Standard errors are zero in exact mode."""

    idle: float
    reception: float
    idle_se: float = 0.0
    reception_se: float = 0.0


def tower_residuals(inputs: LookaheadInputs, sys: ScalarSystem,
                    spec: PerformanceSpec, ch: Channel,
                    horizon: int | None = None, mc_samples: int = 0,
                    rng: np.random.Generator | None = None) -> TowerResiduals:
    """Audit of the one-step tower property of the look-ahead criterion.

    Checks E[criterion at k+1 over horizon D | outcome at k] against
    the criterion at k over horizon D+1: the idle branch (no reception)
    against the look-ahead form, the reception branch against the
    post-reception form.

    With mc_samples = 0 the expectation over the one-step noise is
    exact: the criterion is affine in the second moments of (x, e), and
    its integer envelope count depends only on the reception pattern,
    never on the noise, so plugging the closed-form moments in settles
    it.  A positive mc_samples estimates the same expectation by Monte
    Carlo instead, as an independent audit of that argument; the
    standard errors then quantify the comparison.
    """
    D = spec.D if horizon is None else int(horizon)
    x, e = inputs.x, inputs.e
    a, ab, M = sys.a, sys.a_bar, sys.M

    target_idle = lookahead_criterion(inputs, sys, spec, ch, D + 1)
    target_rx = reception_criterion(x * x, sys, spec, ch, D + 1)

    # One step ahead: idle leaves the anchor alone, reception re-anchors
    # at the current state; either way the noise enters both the state
    # and the error with coefficient one.
    mean_x_idle = ab * x + (a - ab) * e
    mean_e_idle = a * e
    mean_x_rx = ab * x

    if mc_samples <= 0:
        lhs_idle = lookahead_criterion_moments(
            mean_x_idle ** 2 + M, mean_x_idle * mean_e_idle + M,
            mean_e_idle ** 2 + M, inputs.elapsed + 1, inputs.x_at_R_sq,
            sys, spec, ch, D)
        lhs_rx = lookahead_criterion_moments(
            mean_x_rx ** 2 + M, M, M, 1, x * x, sys, spec, ch, D)
        return TowerResiduals(lhs_idle - target_idle, lhs_rx - target_rx)

    if rng is None:
        rng = np.random.default_rng(0)
    v = rng.normal(0.0, math.sqrt(M), size=mc_samples)
    idle_samples = np.array([
        lookahead_criterion(
            LookaheadInputs(mean_x_idle + vi, mean_e_idle + vi,
                            inputs.elapsed + 1, inputs.x_at_R_sq),
            sys, spec, ch, D)
        for vi in v])
    rx_samples = np.array([
        lookahead_criterion(
            LookaheadInputs(mean_x_rx + vi, vi, 1, x * x), sys, spec, ch, D)
        for vi in v])
    return TowerResiduals(
        idle=float(idle_samples.mean() - target_idle),
        reception=float(rx_samples.mean() - target_rx),
        idle_se=float(idle_samples.std(ddof=1) / math.sqrt(mc_samples)),
        reception_se=float(rx_samples.std(ddof=1) / math.sqrt(mc_samples)),
    )


def tail_fraction(stats: EnsembleStats, window_fraction: float = 0.25) -> float:
    """Transmission fraction averaged over the final stretch of the run,
    where the start-up transient has washed out; the window is the last
    quarter of the horizon by default."""
    n = len(stats.frac)
    window = max(1, int(n * window_fraction))
    return float(stats.frac[n - window:].mean())


@dataclass(frozen=True)
class ObjectiveResult:
    passed: bool
    worst_k: int
    worst_ratio: float


def objective_check(stats: EnsembleStats, spec: PerformanceSpec, x0: State,
                    slack: float = 0.10) -> ObjectiveResult:
    """Empirical test of the control objective: the ensemble mean of the
    squared state must stay under (1 + slack) times the deterministic
    envelope at every step.

    The slack absorbs Monte-Carlo error in a second moment; it is a
    statistical tolerance, not part of the guarantee.
    """
    bound = envelope_bound(spec, x0, len(stats.mean_x2) - 1)
    ratio = stats.mean_x2 / bound
    worst_k = int(np.argmax(ratio))
    worst = float(ratio[worst_k])
    return ObjectiveResult(worst <= 1.0 + slack, worst_k, worst)
