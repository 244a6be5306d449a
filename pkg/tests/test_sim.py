"""Simulator plumbing: streams, traces, ensembles, and the sim oracles."""

import os

import numpy as np
import pytest

from etcsim import (
    Channel,
    EnsembleStats,
    LookaheadInputs,
    PolicySpec,
    RunConfig,
    ScalarSystem,
    SeriesDivergenceError,
    lookahead_criterion,
    objective_check,
    run_ensemble,
    run_trajectory,
    sample_reception,
    series_criterion,
    series_norm_criterion,
    tail_fraction,
    tower_residuals,
)
from etcsim.model import state_sq
from etcsim.policies import VectorBoundInputs
from etcsim.sim import _resolve_processes, envelope_bound, stream_rng


def _cfg(sys_, spec, ch, kind="event", x0=155.0, horizon=300, n_runs=1,
         seed=20240901, noise="gaussian", **pol):
    return RunConfig(system=sys_, spec=spec, channel=ch,
                     policy=PolicySpec(kind=kind, **pol), x0=x0,
                     horizon=horizon, n_runs=n_runs, seed=seed, noise=noise)


# ------------------------------------------------------------ rng streams


def test_stream_rng_reproducible_and_independent():
    a = stream_rng(11, 4, 0).random(8)
    b = stream_rng(11, 4, 0).random(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, stream_rng(11, 5, 0).random(8))
    assert not np.array_equal(a, stream_rng(11, 4, 1).random(8))
    assert not np.array_equal(a, stream_rng(12, 4, 0).random(8))


def test_sample_reception_consumes_no_randomness_when_silent():
    ch = Channel(0.6)
    probed, control = stream_rng(7, 0, 1), stream_rng(7, 0, 1)
    for _ in range(5):
        assert sample_reception(0, ch, probed) == 0
    assert probed.random() == control.random()
    with pytest.raises(ValueError):
        sample_reception(2, ch, stream_rng(7, 0, 1))


def test_channel_stream_hits_nominal_rate(channel06):
    # The exact stream the first run's channel sees, one draw per step.
    rng = stream_rng(20240901, 0, 1)
    sequential = [sample_reception(1, channel06, rng) for _ in range(100)]
    bulk = stream_rng(20240901, 0, 1).random(1_000_000) < channel06.p
    assert sequential == bulk[:100].astype(int).tolist()
    assert abs(bulk.mean() - channel06.p) < 2e-3


# ------------------------------------------------------------ trajectories


def test_trajectory_deterministic_per_run_index(scalar_sys, scalar_spec,
                                                channel06):
    cfg = _cfg(scalar_sys, scalar_spec, channel06, horizon=60)
    one = run_trajectory(cfg, run_index=3)
    two = run_trajectory(cfg, run_index=3)
    assert [(r.x, r.t, r.r, r.h, r.trigger) for r in one] == \
        [(r.x, r.t, r.r, r.h, r.trigger) for r in two]
    other = run_trajectory(cfg, run_index=4)
    assert [r.x for r in one] != [r.x for r in other]


def test_forced_first_step(scalar_sys, scalar_spec, channel06):
    trace = run_trajectory(_cfg(scalar_sys, scalar_spec, channel06,
                                horizon=5))
    first = trace[0]
    assert (first.k, first.x, first.t, first.r) == (0, 155.0, 1, 1)
    assert first.h == 0.0
    assert first.trigger is None


def test_closed_loop_contraction_is_exact(scalar_sys, scalar_spec, channel1):
    """No noise, perfect channel, transmit every step: the trajectory is
    x_{k+1} = a_bar x_k with no other arithmetic, so the trace must equal
    the repeated product bit for bit."""
    cfg = _cfg(scalar_sys, scalar_spec, channel1, kind="always", horizon=50,
               noise="none", seed=1)
    trace = run_trajectory(cfg)
    expected = 155.0
    for rec in trace:
        assert rec.x == expected
        assert rec.t == 1 and rec.r == 1
        assert rec.trigger is None
        expected = scalar_sys.a_bar * expected


def test_trigger_burst_bookkeeping(scalar_sys, scalar_spec, channel06):
    """Mode audit over a long trace: the criterion is evaluated exactly
    when the previous step was not an unreceived transmission, and a
    recorded value fixes the decision's sign."""
    trace = run_trajectory(_cfg(scalar_sys, scalar_spec, channel06))
    fired = held = idle = 0
    for prev, rec in zip(trace, trace[1:]):
        assert rec.r <= rec.t
        if prev.t == 1 and prev.r == 0:
            assert rec.trigger is None and rec.t == 1
            held += 1
        else:
            assert rec.trigger is not None
            if rec.trigger >= 0.0:
                assert rec.t == 1
                fired += 1
            else:
                assert rec.t == 0
                idle += 1
    assert fired > 0 and held > 0 and idle > 0


def test_zero_noise_silence(scalar_spec, channel1):
    """Perfect channel and no noise from a state far above the bound: the
    criterion stays negative forever, because the closed loop contracts
    faster than the envelope decays and the ultimate bound exceeds the
    noise floor.  The margin tightens to B - M at the step where the
    envelope bottoms out."""
    sys_ = ScalarSystem.from_closed_loop(1.05, 0.931, 1.0)
    cfg = _cfg(sys_, scalar_spec, channel1, horizon=200, noise="none",
               seed=3)
    trace = run_trajectory(cfg)
    assert all(rec.t == 0 and rec.r == 0 for rec in trace[1:])
    triggers = [rec.trigger for rec in trace[1:]]
    assert all(v is not None and v < 0.0 for v in triggers)
    assert max(triggers) == pytest.approx(-14.5, abs=1e-3)
    assert max(rec.h for rec in trace[1:]) == pytest.approx(-15.49999988,
                                                            abs=1e-5)


# -------------------------------------------------------------- ensembles


def test_single_run_ensemble_matches_trajectory(scalar_sys, scalar_spec,
                                                channel06):
    cfg = _cfg(scalar_sys, scalar_spec, channel06, horizon=80)
    stats = run_ensemble(cfg, processes=1)
    trace = run_trajectory(cfg)

    assert stats.n_runs == 1
    assert np.array_equal(stats.mean_x2,
                          np.array([state_sq(r.x) for r in trace]))
    assert np.array_equal(stats.mean_h, np.array([r.h for r in trace]))
    t = np.array([r.t for r in trace], dtype=np.int64)
    r = np.array([r.r for r in trace], dtype=np.int64)
    assert stats.transmissions == int(t.sum())
    assert stats.receptions == int(r.sum())

    # Running fraction counts decided steps only: frac[k] * k recovers
    # the transmissions over steps 1..k, and the forced step is excluded.
    assert stats.frac[0] == 0.0
    ks = np.arange(1, len(t))
    assert np.allclose(stats.frac[1:] * ks, np.cumsum(t[1:]), atol=1e-12)
    assert np.array_equal(stats.bound,
                          envelope_bound(scalar_spec, 155.0, cfg.horizon))


def test_parallel_merge_is_bit_identical(scalar_sys, scalar_spec, channel06):
    cfg = _cfg(scalar_sys, scalar_spec, channel06, horizon=80, n_runs=130)
    serial = run_ensemble(cfg, processes=1)
    pooled = run_ensemble(cfg, processes=4)
    assert np.array_equal(serial.mean_x2, pooled.mean_x2)
    assert np.array_equal(serial.mean_h, pooled.mean_h)
    assert np.array_equal(serial.frac, pooled.frac)
    assert (serial.transmissions, serial.receptions) == \
        (pooled.transmissions, pooled.receptions)


def test_resolve_processes(monkeypatch):
    assert _resolve_processes(3) == 3
    assert _resolve_processes(0) == 1
    monkeypatch.setenv("ETCSIM_THREADS", "2")
    assert _resolve_processes(None) == 2
    assert _resolve_processes(5) == 5
    monkeypatch.delenv("ETCSIM_THREADS")
    assert _resolve_processes(None) == (os.cpu_count() or 1)


def test_envelope_bound_decays_to_floor(scalar_spec):
    env = envelope_bound(scalar_spec, 155.0, 300)
    assert env[0] == 155.0 ** 2
    assert np.all(np.diff(env) <= 0.0)
    assert env[181] > scalar_spec.B
    assert np.all(env[182:] == scalar_spec.B)


# ------------------------------------------------- synthetic stats helpers


def _stats_with(mean_x2, frac=None):
    n = len(mean_x2)
    return EnsembleStats(
        mean_x2=np.asarray(mean_x2, dtype=float),
        mean_h=np.zeros(n),
        frac=np.zeros(n) if frac is None else np.asarray(frac, dtype=float),
        bound=np.zeros(n),
        n_runs=1,
        transmissions=0,
        receptions=0,
    )


def test_objective_check_locates_worst_step(scalar_spec):
    bound = envelope_bound(scalar_spec, 155.0, 10)
    ok = objective_check(_stats_with(bound * 1.05), scalar_spec, 155.0)
    assert ok.passed and ok.worst_ratio == pytest.approx(1.05, rel=1e-12)

    spiked = bound.copy()
    spiked[7] *= 1.2
    bad = objective_check(_stats_with(spiked), scalar_spec, 155.0)
    assert not bad.passed
    assert bad.worst_k == 7
    assert bad.worst_ratio == pytest.approx(1.2, rel=1e-12)
    assert objective_check(_stats_with(spiked), scalar_spec, 155.0,
                           slack=0.25).passed


def test_tail_fraction_window():
    stats = _stats_with(np.zeros(8), frac=np.arange(8.0))
    assert tail_fraction(stats) == pytest.approx(6.5)
    assert tail_fraction(stats, window_fraction=0.5) == pytest.approx(5.5)
    assert tail_fraction(stats, window_fraction=0.01) == pytest.approx(7.0)


# ----------------------------------------------------------- oracles


def test_series_oracle_rejects_divergent_tail(scalar_sys, scalar_spec):
    thin = Channel(0.05)
    with pytest.raises(SeriesDivergenceError):
        series_criterion(LookaheadInputs(1.0, 0.0, 1, 1.0), scalar_sys,
                         scalar_spec, thin)
    with pytest.raises(SeriesDivergenceError):
        series_norm_criterion(VectorBoundInputs(1.0, 0.0, 1, 1.0),
                              scalar_sys.gain_bounds(), scalar_spec, thin)


def _boundary_safe(y, spec, tol=1e-3):
    """Keep envelope crossing counts away from integer ties, where the
    ceil inside the criterion legitimately differs across horizons."""
    if y <= 0.0:
        return True
    ratio = np.log(y / spec.B) / np.log(1.0 / spec.c ** 2)
    return abs(ratio - round(ratio)) >= tol


def test_tower_identity_exact(scalar_sys, scalar_spec, channel06):
    """One-step tower audit in exact mode: conditioning tomorrow's
    criterion on today's outcome reproduces today's criterion one
    horizon deeper, on both channel branches."""
    rng = np.random.default_rng(20240807)
    checked = 0
    while checked < 100:
        x = float(rng.uniform(-200, 200))
        e = float(rng.uniform(-30, 30))
        elapsed = int(rng.integers(1, 41))
        anchor = float(rng.uniform(0.1, 30000.0))
        if not (_boundary_safe(anchor, scalar_spec)
                and _boundary_safe(x * x, scalar_spec)):
            continue
        res = tower_residuals(LookaheadInputs(x, e, elapsed, anchor),
                              scalar_sys, scalar_spec, channel06)
        assert abs(res.idle) < 1e-10
        assert abs(res.reception) < 1e-10
        assert res.idle_se == 0.0 and res.reception_se == 0.0
        checked += 1


def test_tower_identity_exact_at_perfect_channel(scalar_sys, scalar_spec,
                                                 channel1):
    res = tower_residuals(LookaheadInputs(40.0, -6.0, 5, 800.0), scalar_sys,
                          scalar_spec, channel1)
    assert abs(res.idle) < 1e-10
    assert abs(res.reception) < 1e-10


def test_tower_identity_monte_carlo(scalar_sys, scalar_spec, channel06):
    res = tower_residuals(LookaheadInputs(12.0, -3.0, 4, 400.0), scalar_sys,
                          scalar_spec, channel06, mc_samples=20000,
                          rng=np.random.default_rng(42))
    assert res.idle_se > 0.0 and res.reception_se > 0.0
    assert abs(res.idle) < 5.0 * res.idle_se
    assert abs(res.reception) < 5.0 * res.reception_se
