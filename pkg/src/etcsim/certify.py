"""Certification of the envelope threshold and trigger feasibility.

The event trigger downstream is only sound when the open-loop
performance curve s -> H(s, y) changes sign at most once (negative,
then positive) for every post-reception energy y: once the criterion
says "unsafe" it must never fall back to "safe" on its own.  That sign
discipline holds whenever the ultimate bound B is large enough.  This
module locates the threshold numerically, exactly the way the
analysis suggests:

  * split H = min{rate branch, floor branch}, where the rate branch
    carries the decaying envelope c^(2s) y and the floor branch the
    constant B;
  * find where the branches cross (crossing time) and where the floor
    branch bottoms out (its argmin);
  * the gap between those two instants is monotone in y with a single
    root U, and evaluating the crossing value of H at U, as a function
    of B, gives a strictly concave map with a known left zero.  The
    threshold is the larger of that map's second zero and the closed
    critical constant.

The rest of the module turns these facts into auditable reports: case
classification for individual energies, a grid verifier for the sign
discipline, and an end-to-end feasibility report combining the
threshold with the uniform criterion bound and the periodic-schedule
scan from `analytic`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .analytic import (
    criterion_upper_bound,
    max_sufficient_period,
    open_loop_performance,
)
from .model import (
    Channel,
    GainBounds,
    PerformanceSpec,
    ScalarSystem,
    System,
    VectorSystem,
    validate_assumptions,
)

__all__ = [
    "rate_branch",
    "floor_branch",
    "branch_crossing",
    "floor_branch_argmin",
    "crossing_gap",
    "crossing_gap_root",
    "floor_branch_min",
    "crossing_value",
    "critical_bound",
    "monotone_threshold",
    "CaseLabel",
    "classify_case",
    "SignMonotoneResult",
    "verify_sign_monotone",
    "CertificationReport",
    "certify",
]

_BISECT_REL_TOL = 1e-10
_MAX_DOUBLINGS = 200

Gains = ScalarSystem | GainBounds


def rate_branch(s: float, y: float, sys: Gains, spec: PerformanceSpec) -> float:
    '''Open-loop performance with the decaying envelope active.'''
    a2 = sys.a * sys.a
    ab2 = sys.a_bar * sys.a_bar
    return ab2 ** s * y + sys.M_bar * (a2 ** s - 1.0) - spec.c ** (2 * s) * y


def floor_branch(s: float, y: float, sys: Gains, spec: PerformanceSpec) -> float:
    '''Open-loop performance with the constant floor B active.'''
    a2 = sys.a * sys.a
    ab2 = sys.a_bar * sys.a_bar
    return ab2 ** s * y + sys.M_bar * (a2 ** s - 1.0) - spec.B


def branch_crossing(y: float, spec: PerformanceSpec) -> float:
    """Time at which the decaying envelope meets the floor:
    c^(2s) y = B, i.e. s = log(y/B) / log(1/c^2)."""
    return math.log(y / spec.B) / math.log(1.0 / (spec.c * spec.c))


def floor_branch_argmin(y: float, sys: Gains) -> float:
    """Minimizer of the floor branch in s (set its s-derivative to zero)."""
    a2 = sys.a * sys.a
    ab2 = sys.a_bar * sys.a_bar
    return math.log(y * math.log(1.0 / ab2) / (sys.M_bar * math.log(a2))) / math.log(a2 / ab2)


def crossing_gap(y: float, sys: Gains, spec: PerformanceSpec) -> float:
    """argmin minus crossing time; positive means the floor branch is
    still falling when it takes over from the rate branch."""
    return floor_branch_argmin(y, sys) - branch_crossing(y, spec)


def _log_constants(sys: Gains, c: float, B: float | None = None):
    a2 = sys.a * sys.a
    ab2 = sys.a_bar * sys.a_bar
    P1 = math.log(a2 / ab2)
    P2 = math.log(a2 * c * c / ab2)
    P3 = math.log(1.0 / (c * c))
    P4 = math.log(math.log(1.0 / ab2) / (sys.M_bar * math.log(a2)))
    return P1, P2, P3, P4


def crossing_gap_root(B: float, sys: Gains, spec_or_c: PerformanceSpec | float) -> float:
    """The energy U at which the crossing gap vanishes, for a floor B.

    Solved in closed form from gap(U) = 0:
    log U = log(B log(1/a_bar^2) / (M_bar log a^2)) * log(1/c^2)
            / log(a^2 c^2 / a_bar^2) + log B.
    """
    c = spec_or_c.c if isinstance(spec_or_c, PerformanceSpec) else spec_or_c
    a2 = sys.a * sys.a
    ab2 = sys.a_bar * sys.a_bar
    num = math.log(B * math.log(1.0 / ab2) / (sys.M_bar * math.log(a2)))
    return math.exp(num * math.log(1.0 / (c * c)) / math.log(a2 * c * c / ab2) + math.log(B))


def floor_branch_min(y: float, sys: Gains, spec: PerformanceSpec) -> float:
    '''Value of the floor branch at its own minimizer.'''
    return floor_branch(floor_branch_argmin(y, sys), y, sys, spec)


def crossing_value(y: float, sys: Gains, spec: PerformanceSpec) -> float:
    '''Value of the performance curve where the branches cross.'''
    return rate_branch(branch_crossing(y, spec), y, sys, spec)


def critical_bound(sys: Gains, c: float) -> float:
    """Closed-form lower critical constant for the floor:
    M_bar log(a^2) / log(c^2 / a_bar^2)."""
    a2 = sys.a * sys.a
    ab2 = sys.a_bar * sys.a_bar
    return sys.M_bar * math.log(a2) / math.log(c * c / ab2)


def monotone_threshold(sys: Gains, c: float) -> float:
    """Smallest certified floor above which the sign discipline holds.

    Follows the concave-map construction: with U(B) the gap root, the
    map B -> crossing_value(U(B)) is strictly concave and vanishes at
    the floor B0 where the gap root coincides with the floor itself.
    If the map is non-increasing there, the critical constant already
    suffices.  Otherwise the map rises, so a second zero exists;
    bracket it by doubling from B0 and bisect, then take the larger of
    that zero and the critical constant.
    """
    P1, P2, P3, P4 = _log_constants(sys, c)
    a2 = sys.a * sys.a
    ab2 = sys.a_bar * sys.a_bar
    B0 = math.exp(-P4)
    b_crit = critical_bound(sys, c)

    def chi(B: float) -> float:
        # crossing_value at the gap root, written via the log constants
        # so the left zero at B0 is exact to rounding.
        s = (math.log(B) + P4) / P2
        U = math.exp((P1 * math.log(B) + P3 * P4) / P2)
        Y = ab2 ** s * U + sys.M_bar * a2 ** s
        return Y - sys.M_bar - B

    # Closed-form slope at B0 (finite differences at the decision point
    # would be noise-limited since chi(B0) = 0 exactly).
    Y0 = math.exp(-P4) + sys.M_bar  # s = 0 at B0 and U(B0) = B0
    slope0 = Y0 * math.log(a2) / (P2 * B0) - 1.0
    if slope0 <= 0.0:
        return b_crit

    lo, hi = B0, 2.0 * B0
    doublings = 0
    while chi(hi) >= 0.0:
        lo, hi = hi, 2.0 * hi
        doublings += 1
        if doublings >= _MAX_DOUBLINGS:
            raise ArithmeticError(
                "no sign change while bracketing the threshold; "
                "parameters are outside the regime this method covers"
            )
    while hi - lo > _BISECT_REL_TOL * lo:
        mid = 0.5 * (lo + hi)
        if chi(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    return max(b_crit, 0.5 * (lo + hi))


@dataclass(frozen=True)
class CaseLabel:
    """How the performance curve can behave past the branch crossing.

    I:   the floor branch is already rising at the crossing.
    II:  the curve is non-positive at the crossing, so convexity keeps
         the sign discipline.
    III: positive at the crossing but the floor branch never dips below
         zero afterwards (benign).
    IV:  positive at the crossing and the floor branch dips back below
         zero: the sign discipline fails.
    """

    case: str
    argmin_s: float
    crossing_s: float
    floor_min: float
    crossing_val: float


def classify_case(y: float, sys: Gains, spec: PerformanceSpec) -> CaseLabel:
    '''Classify one post-reception energy y > B.'''
    if y <= spec.B:
        raise ValueError("classification applies to energies above the floor")
    s_min = floor_branch_argmin(y, sys)
    s_cross = branch_crossing(y, spec)
    f_min = floor_branch_min(y, sys, spec)
    f_cross = crossing_value(y, sys, spec)
    if s_min < s_cross:
        case = "I"
    elif f_cross <= 0.0:
        case = "II"
    elif f_min > 0.0:
        case = "III"
    else:
        case = "IV"
    return CaseLabel(case, s_min, s_cross, f_min, f_cross)


@dataclass(frozen=True)
class SignMonotoneResult:
    ok: bool
    violation: tuple[float, int] | None  # (y, s) of the first relapse


def verify_sign_monotone(sys: Gains, spec: PerformanceSpec, y_grid,
                         s_max: int) -> SignMonotoneResult:
    """Audit the sign discipline of the performance curve on a grid.

    For each energy y, scans integer s and checks the sign pattern is
    (<= 0)* then (> 0)*: once the curve goes positive it must stay
    positive.  Returns the first (y, s) where it relapses, if any.
    """
    for y in y_grid:
        seen_positive = False
        for s in range(s_max + 1):
            positive = open_loop_performance(s, y, sys, spec) > 0.0
            if positive:
                seen_positive = True
            elif seen_positive:
                return SignMonotoneResult(False, (float(y), s))
    return SignMonotoneResult(True, None)


@dataclass(frozen=True)
class CertificationReport:
    """Feasibility summary for a system / envelope / channel triple.

    `feasible` requires the floor to clear the monotonicity threshold
    and the uniform criterion bound to be negative at the requested
    horizon.  `backoff` is the largest extra silence (up to the cap)
    that keeps the uniform bound negative; it drives the transmission
    fraction bound 1/(1 + backoff * p).
    """

    b_critical: float
    b_star: float
    horizon: int
    feasible: bool
    feasible_horizon_max: int | None
    backoff: int | None
    fraction_bound: float | None
    periodic_period_max: int | None
    smaller_horizons_feasible: bool | None

    def rows(self) -> list[tuple[str, object]]:
        '''Key/value rows in the order the CSV schema pins.'''
        return [
            ("B_c", self.b_critical),
            ("B_star", self.b_star),
            ("D", self.horizon),
            ("feasible", self.feasible),
            ("Bcal", self.backoff),
            ("fraction_bound", self.fraction_bound),
            ("T_max", self.periodic_period_max),
        ]


def certify(sys: System | GainBounds, spec: PerformanceSpec, ch: Channel,
            backoff_max: int = 64) -> CertificationReport:
    """Assemble the full feasibility report.

    Vector systems are certified through their norm summary (drift and
    closed-loop spectral norms, trace-based noise ratio), which is the
    exact setting in which the vector trigger's guarantees hold.
    Infeasibility is a report outcome, not an exception; violated
    standing assumptions do raise, since none of the quantities below
    mean anything without them.
    """
    if isinstance(sys, (ScalarSystem, VectorSystem)):
        report = validate_assumptions(sys, spec, ch)
        if not report.ok:
            names = ", ".join(c.name for c in report.failed())
            raise ValueError(f"standing assumptions violated: {names}")
        gains = sys.gain_bounds()
    else:
        gains = sys

    b_star = monotone_threshold(gains, spec.c)
    b_crit = critical_bound(gains, spec.c)

    def bound_at(d: int) -> float:
        return criterion_upper_bound(d, gains, spec, ch)

    feasible = spec.B > b_star and bound_at(spec.D) < 0.0

    # The uniform bound is strictly convex in the horizon, so the set
    # where it is negative is one contiguous stretch: scan forward until
    # the bound is positive *and* growing.
    feasible_max = None
    d, prev = 0, None
    while d <= 10_000:
        val = bound_at(d)
        if val < 0.0:
            feasible_max = d
        elif prev is not None and val > prev:
            break
        prev = val
        d += 1

    backoff = None
    fraction_bound = None
    if feasible:
        backoff = 0
        while backoff < backoff_max and bound_at(spec.D + backoff + 1) < 0.0:
            backoff += 1
        fraction_bound = 1.0 / (1.0 + backoff * ch.p)

    smaller_ok = None
    if feasible:
        smaller_ok = all(bound_at(d) < 0.0 for d in range(1, spec.D))

    return CertificationReport(
        b_critical=b_crit,
        b_star=b_star,
        horizon=spec.D,
        feasible=feasible,
        feasible_horizon_max=feasible_max,
        backoff=backoff,
        fraction_bound=fraction_bound,
        periodic_period_max=max_sufficient_period(gains, spec, ch),
        smaller_horizons_feasible=smaller_ok,
    )
