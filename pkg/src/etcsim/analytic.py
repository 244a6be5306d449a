"""Closed-form evaluation of the scheduling criteria for scalar plants.

Everything here is built from one expectation: starting from the
current information set, suppose no packet arrives for `horizon` steps
and the sensor then transmits every step until a success.  The expected
performance gap at that (random, geometrically distributed) reception
time has an exact closed form because the plant is linear, the noise
has known second moments, and the drop process is Bernoulli.  The
resulting quantity is the look-ahead criterion: negative means the
planned silence is safe, non-negative means the envelope is at risk and
the policy should start transmitting.

Geometric weighting shows up everywhere through the factor
b^horizon / (1 - b(1-p)), the closed form of sum_{s>=horizon}
b^s (1-p)^(s-horizon).  The factor diverges when |b|(1-p) >= 1, which
is exactly a violated standing assumption; that condition raises
SeriesDivergenceError rather than returning garbage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from .model import Channel, GainBounds, PerformanceSpec, ScalarSystem

__all__ = [
    "SeriesDivergenceError",
    "LookaheadInputs",
    "geometric_factor",
    "envelope_steps_left",
    "lookahead_criterion",
    "lookahead_criterion_moments",
    "reception_criterion",
    "open_loop_performance",
    "criterion_upper_bound",
    "periodic_sufficient",
    "max_sufficient_period",
]

# Floating-point slop for the near-integer ceiling guard: when the
# envelope-crossing ratio is an exact integer (a measure-zero boundary
# that parameter choices like x^2 = B/c^2 hit exactly), the ceiling must
# not flicker up by one because of rounding in the logs.
_CEIL_TIE_TOL = 1e-9


class SeriesDivergenceError(ValueError):
    """A geometric series in the criteria fails to converge.

    Raised when some base b has |b|(1-p) >= 1, which signals a violated
    standing assumption (the drop rate is too high for the drift).
    """


@dataclass(frozen=True, slots=True)
class LookaheadInputs:
    """The slice of the information set the criteria depend on."""

    x: float        # current state
    e: float        # estimation error x - xhat
    elapsed: int    # steps since the last reception (>= 1 mid-flight)
    x_at_R_sq: float  # squared state at the last reception


def geometric_factor(b: float, p: float, horizon: int | float) -> float:
    """b^horizon / (1 - b(1-p)), the tail sum of the weighted series.

    `horizon` is an integer in the scheduling context but real exponents
    are accepted for positive bases (the feasibility bound is evaluated
    on a real grid).
    """
    tail = b * (1.0 - p)
    if abs(b) * (1.0 - p) >= 1.0:
        raise SeriesDivergenceError(
            f"geometric base b = {b} with drop rate 1-p = {1.0 - p} diverges: "
            f"|b|(1-p) = {abs(b) * (1.0 - p):.6g} >= 1"
        )
    if b < 0 and not float(horizon).is_integer():
        raise ValueError("negative base requires an integer horizon")
    return b ** horizon / (1.0 - tail)


def _ceil_with_tie_guard(ratio: float) -> int:
    nearest = round(ratio)
    if abs(ratio - nearest) <= _CEIL_TIE_TOL:
        return int(nearest)
    return int(math.ceil(ratio))


def envelope_steps_left(x_at_R_sq: float, elapsed: int, horizon: int,
                        spec: PerformanceSpec) -> int:
    """Steps beyond elapsed+horizon during which the decaying envelope
    still sits above the ultimate bound.

    Counts n = ceil(log(x_R^2/B) / log(1/c^2)), the first step at which
    c^(2n) x_R^2 <= B, then subtracts what has already passed and what
    the look-ahead skips, clamping at zero.  x_R^2 = 0 short-circuits to
    zero (the limit the clamp enforces anyway).
    """
    if x_at_R_sq <= 0.0:
        return 0
    ratio = math.log(x_at_R_sq / spec.B) / math.log(1.0 / (spec.c * spec.c))
    return max(0, _ceil_with_tie_guard(ratio) - elapsed - horizon)


@lru_cache(maxsize=512)
def _criterion_terms(sys: ScalarSystem | GainBounds, spec: PerformanceSpec,
                     ch: Channel, horizon: int):
    """The four geometric factors every criterion shares.

    Cached because a policy re-evaluates its criterion with the same
    (sys, spec, ch, horizon) every step of every run; all four arguments
    are small frozen dataclasses.
    """
    a, a_bar, p = sys.a, sys.a_bar, ch.p
    g_aa = geometric_factor(a * a, p, horizon)
    g_ab = geometric_factor(a * a_bar, p, horizon)
    g_bb = geometric_factor(a_bar * a_bar, p, horizon)
    g_cc = geometric_factor(spec.c * spec.c, p, horizon)
    return g_aa, g_ab, g_bb, g_cc


def lookahead_criterion(inputs: LookaheadInputs, sys: ScalarSystem,
                        spec: PerformanceSpec, ch: Channel,
                        horizon: int | None = None) -> float:
    """Expected performance gap at the next reception.

    Negative: staying silent for `horizon` more steps (then transmitting
    until success) keeps the envelope in expectation.  `horizon`
    defaults to spec.D; the tower-property checks evaluate it one step
    deeper, hence the override.
    """
    x, e = inputs.x, inputs.e
    return lookahead_criterion_moments(
        x * x, x * e, e * e, inputs.elapsed, inputs.x_at_R_sq,
        sys, spec, ch, horizon,
    )


def lookahead_criterion_moments(xx: float, xe: float, ee: float, elapsed: int,
                                x_at_R_sq: float, sys: ScalarSystem,
                                spec: PerformanceSpec, ch: Channel,
                                horizon: int | None = None) -> float:
    """The look-ahead criterion as a function of the second moments of
    the state and the estimation error.

    The criterion is affine in (x^2, x e, e^2) with coefficients that
    depend only on the gains and the horizon, so it commutes with
    expectations over those moments.  The tower-property audit exploits
    this: plugging in the exact one-step-ahead moments evaluates the
    conditional expectation of the next step's criterion in closed form.
    """
    D = spec.D if horizon is None else horizon
    p = ch.p
    g_aa, g_ab, g_bb, g_cc = _criterion_terms(sys, spec, ch, D)
    z = spec.c ** (2 * elapsed) * x_at_R_sq
    q = envelope_steps_left(x_at_R_sq, elapsed, D, spec)
    quad = (
        g_bb * xx
        + 2.0 * (g_ab - g_bb) * xe
        + (g_aa - 2.0 * g_ab + g_bb) * ee
    )
    envelope = (
        g_cc * z
        + (spec.B / p - spec.c ** (2 * q) * g_cc * z) * (1.0 - p) ** q
    )
    return p * (quad + sys.M_bar * (g_aa - 1.0 / p) - envelope)


def reception_criterion(x_sq: float, sys: ScalarSystem | GainBounds,
                        spec: PerformanceSpec, ch: Channel,
                        horizon: int | None = None) -> float:
    """The look-ahead criterion evaluated right after a reception.

    At a reception the error is zero and the envelope restarts at the
    just-received state, so the criterion collapses to a function of the
    squared state alone.
    """
    D = spec.D if horizon is None else horizon
    p = ch.p
    g_aa, _, g_bb, g_cc = _criterion_terms(sys, spec, ch, D)
    q = envelope_steps_left(x_sq, 0, D, spec)
    envelope = (
        g_cc * x_sq
        + (spec.B / p - spec.c ** (2 * q) * g_cc * x_sq) * (1.0 - p) ** q
    )
    return p * (g_bb * x_sq + sys.M_bar * (g_aa - 1.0 / p) - envelope)


def open_loop_performance(s: float, y: float, sys: ScalarSystem | GainBounds,
                          spec: PerformanceSpec) -> float:
    """Expected performance gap s steps after a reception at squared
    state y, assuming nothing arrives in between.

    Computed with squared gains so it stays real for fractional s even
    when the raw gains are negative.
    """
    a2 = sys.a * sys.a
    ab2 = sys.a_bar * sys.a_bar
    return (
        ab2 ** s * y
        + sys.M_bar * (a2 ** s - 1.0)
        - max(spec.c ** (2 * s) * y, spec.B)
    )


def criterion_upper_bound(dcal: float, sys: ScalarSystem | GainBounds,
                          spec: PerformanceSpec, ch: Channel) -> float:
    """State-uniform upper bound on the post-reception criterion at
    horizon dcal; a negative value certifies the trigger is feasible at
    that horizon, whatever state receptions happen to land on.

    The bound is strictly convex in dcal (each term is an exponential
    with positive weight), which the feasibility scans downstream rely
    on: the set where it is negative is a contiguous range of horizons.
    """
    p = ch.p
    g_aa = geometric_factor(sys.a * sys.a, p, dcal)
    g_bb = geometric_factor(sys.a_bar * sys.a_bar, p, dcal)
    g_cc = geometric_factor(spec.c * spec.c, p, dcal)
    return (g_bb - g_cc) * spec.B / spec.c ** (2 * dcal) + sys.M_bar * (g_aa - 1.0 / p)


def periodic_sufficient(T: int, sys: ScalarSystem | GainBounds,
                        spec: PerformanceSpec, ch: Channel) -> bool:
    """Whether a fixed every-T-steps schedule certifiably meets the
    envelope.

    The period-T loop looks like a one-step loop with all gains raised
    to the T-th power, so the same uniform-bound test applies with
    horizon 1 at those powered gains.  A divergent factor (drop rate too
    high for a^(2T)) cannot certify anything and returns False.
    """
    if T < 1:
        raise ValueError("period must be >= 1")
    powered = GainBounds(sys.a ** T, sys.a_bar ** T, sys.M_bar)
    p = ch.p
    try:
        g_aa = geometric_factor(powered.a ** 2, p, 1)
        g_bb = geometric_factor(powered.a_bar ** 2, p, 1)
        g_cc = geometric_factor(spec.c ** (2 * T), p, 1)
    except SeriesDivergenceError:
        return False
    lhs = (g_bb - g_cc) * spec.B / spec.c ** (2 * T) + sys.M_bar * (g_aa - 1.0 / p)
    return lhs < 0.0


def max_sufficient_period(sys: ScalarSystem | GainBounds, spec: PerformanceSpec,
                          ch: Channel, cap: int = 4096) -> int | None:
    """Largest certifiable period for a fixed schedule, or None.

    Scans T = 1, 2, ... until the geometric factors diverge (for p < 1
    that happens at a^(2T)(1-p) >= 1) or the cap is reached.  The
    certificate's left side is a sum of exponentials in T and turns
    definitively insufficient once positive, but the scan is cheap, so
    the whole admissible range is checked rather than relying on that.
    """
    best = None
    for T in range(1, cap + 1):
        if ch.p < 1.0 and (sys.a ** (2 * T)) * (1.0 - ch.p) >= 1.0:
            break
        if periodic_sufficient(T, sys, spec, ch):
            best = T
    return best
