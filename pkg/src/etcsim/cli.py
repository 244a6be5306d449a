"""Command line front end: certify, simulate, validate, sweep.

Exit codes are part of the contract so CI can tell outcomes apart:

  0  success (and, for certify, feasible)
  1  config parse error, bad arguments, or failed standing assumptions
  2  certify ran fine and the answer is infeasible
  3  a criterion series diverged while simulating
  4  validation checks ran and at least one failed

Every run writes CSVs (17 significant digits, LF newlines) so repeated
invocations with the same config are byte-identical; report paths also
render PNG figures next to the CSVs unless --no-plot is given.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .analytic import (
    LookaheadInputs,
    SeriesDivergenceError,
    criterion_upper_bound,
    lookahead_criterion,
    reception_criterion,
)
from .certify import (
    certify,
    classify_case,
    crossing_gap_root,
    monotone_threshold,
    verify_sign_monotone,
)
from .config import ConfigError, apply_param, build_run_config, read_config
from .model import ScalarSystem, VectorSystem, validate_assumptions
from .policies import (
    VectorBoundInputs,
    norm_lookahead_bound,
    norm_reception_bound,
)
from .sim import (
    RunConfig,
    objective_check,
    run_ensemble,
    run_trajectory,
    series_criterion,
    series_norm_criterion,
    tail_fraction,
    tower_residuals,
)

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    '''argparse exits 2 on usage errors; 2 means infeasible here, so remap.'''

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="etcsim",
        description="Event-triggered transmission scheduling: simulate, "
                    "certify, validate, sweep.")
    sub = parser.add_subparsers(dest="command", required=True)

    cert = sub.add_parser("certify", parents=[], help="feasibility report")
    cert.add_argument("--config", required=True)
    cert.add_argument("--out", default=".")
    cert.add_argument("--bcal-max", type=int, default=64,
                      help="cap on the silent-backoff search")
    cert.set_defaults(func=_cmd_certify)

    simu = sub.add_parser("simulate", help="run one seeded ensemble")
    simu.add_argument("--config", required=True)
    simu.add_argument("--out", default=".")
    simu.add_argument("--no-plot", action="store_true")
    simu.set_defaults(func=_cmd_simulate)

    vali = sub.add_parser("validate", help="oracle and invariant checks")
    vali.add_argument("--config", required=True)
    vali.add_argument("--level", choices=("quick", "full"), default="quick")
    vali.set_defaults(func=_cmd_validate)

    swee = sub.add_parser("sweep", help="rerun an ensemble across values")
    swee.add_argument("--config", required=True)
    swee.add_argument("--out", default=".")
    swee.add_argument("--param", required=True,
                      help="section.key of a numeric parameter, e.g. channel.p")
    swee.add_argument("--values", required=True,
                      help="comma-separated values to sweep")
    swee.add_argument("--no-plot", action="store_true")
    swee.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SeriesDivergenceError as exc:
        print(f"divergent criterion series: {exc}", file=sys.stderr)
        return 3


# ---------------------------------------------------------------- output


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _ensure_out(out: str) -> str:
    os.makedirs(out, exist_ok=True)
    return out


def _gate_assumptions(cfg: RunConfig) -> int | None:
    '''Exit-1 gate for policies whose criteria need the assumptions.'''
    report = validate_assumptions(cfg.system, cfg.spec, cfg.channel)
    if report.ok:
        return None
    print("standing assumptions violated:", file=sys.stderr)
    print(str(report), file=sys.stderr)
    return 1


# ---------------------------------------------------------------- certify


def _cmd_certify(args) -> int:
    cfg = build_run_config(read_config(args.config))
    try:
        report = certify(cfg.system, cfg.spec, cfg.channel,
                         backoff_max=args.bcal_max)
    except ValueError as exc:
        print(f"certification aborted: {exc}", file=sys.stderr)
        return 1

    out = _ensure_out(args.out)
    path = os.path.join(out, "certify.csv")
    _write_csv(path, ["key", "value"], report.rows())

    print(f"critical constant B_c  = {report.b_critical:.6g}")
    print(f"sign threshold   B*    = {report.b_star:.6g}")
    print(f"configured floor B     = {cfg.spec.B:.6g}")
    verdict = "feasible" if report.feasible else "infeasible"
    print(f"trigger at horizon D = {report.horizon}: {verdict}")
    if report.feasible:
        print(f"  certified silent backoff: {report.backoff} "
              f"(transmission fraction bound {report.fraction_bound:.6g})")
        if report.smaller_horizons_feasible:
            print("  every smaller horizon is feasible too")
    if report.feasible_horizon_max is not None:
        print(f"largest feasible horizon: {report.feasible_horizon_max}")
    if report.periodic_period_max is not None:
        print(f"largest certified fixed period: {report.periodic_period_max}")
    print(f"wrote {path}")
    return 0 if report.feasible else 2


# --------------------------------------------------------------- simulate


def _policy_label(cfg: RunConfig) -> str:
    ps = cfg.policy
    if ps.kind == "periodic":
        return f"periodic (T={ps.period})"
    if ps.kind in ("event", "event_vector"):
        return f"{ps.kind} (D={ps.horizon if ps.horizon is not None else cfg.spec.D})"
    if ps.kind == "nominal":
        quiet = ps.horizon if ps.horizon is not None else cfg.spec.D
        return f"nominal (anchor={ps.anchor}, quiet={quiet})"
    return ps.kind


def _run_and_write(cfg: RunConfig, out: str, tag: str, no_plot: bool):
    '''Shared ensemble runner for simulate and sweep points.'''
    stats = run_ensemble(cfg)
    rows = zip(range(len(stats.mean_x2)), stats.mean_x2, stats.bound,
               stats.frac, stats.mean_h)
    ens_path = os.path.join(out, f"ensemble{tag}.csv")
    _write_csv(ens_path, ["k", "mean_x2", "bound", "frac", "mean_h"],
               ((k, x2, b, f, h) for k, x2, b, f, h in rows))
    written = [ens_path]
    if not no_plot:
        from .plots import render_ensemble_figure
        fig_path = os.path.join(out, f"ensemble{tag}.png")
        render_ensemble_figure(stats, fig_path)
        written.append(fig_path)
    return stats, written


def _cmd_simulate(args) -> int:
    cfg = build_run_config(read_config(args.config))
    if cfg.policy.kind in ("event", "event_vector"):
        failed = _gate_assumptions(cfg)
        if failed is not None:
            return failed

    out = _ensure_out(args.out)
    stats, written = _run_and_write(cfg, out, "", args.no_plot)

    if cfg.n_runs == 1:
        trace = run_trajectory(cfg)
        is_vec = isinstance(cfg.system, VectorSystem)
        if is_vec:
            header = ["k"] + [f"x{i}" for i in range(cfg.system.n)] + \
                     ["t", "r", "h", "G"]
            rows = ([rec.k, *np.asarray(rec.x, dtype=float),
                     rec.t, rec.r, rec.h, rec.trigger] for rec in trace)
        else:
            header = ["k", "x", "t", "r", "h", "G"]
            rows = ([rec.k, rec.x, rec.t, rec.r, rec.h, rec.trigger]
                    for rec in trace)
        traj_path = os.path.join(out, "trajectory.csv")
        _write_csv(traj_path, header, rows)
        written.append(traj_path)
        if not args.no_plot:
            from .plots import render_trajectory_figure
            fig_path = os.path.join(out, "trajectory.png")
            render_trajectory_figure(trace, fig_path)
            written.append(fig_path)

    obj = objective_check(stats, cfg.spec, cfg.x0)
    tail = tail_fraction(stats)
    print(f"policy: {_policy_label(cfg)}  runs: {cfg.n_runs}  "
          f"horizon: {cfg.horizon}  seed: {cfg.seed}")
    print(f"objective: {'pass' if obj.passed else 'FAIL'} "
          f"(worst mean/envelope ratio {obj.worst_ratio:.4f} at k={obj.worst_k})")
    print(f"tail transmission fraction: {tail:.4f}")
    for path in written:
        print(f"wrote {path}")
    return 0


# --------------------------------------------------------------- validate


def _rel_err(got: float, want: float) -> float:
    return abs(got - want) / max(1.0, abs(want))


def _scalar_quick_checks(cfg: RunConfig) -> list[tuple[str, bool, str]]:
    sys_, spec, ch = cfg.system, cfg.spec, cfg.channel
    rng = np.random.default_rng(20240517)
    x_scale = max(abs(float(np.max(np.atleast_1d(cfg.x0)))), 10.0)

    worst_series = 0.0
    worst_plus = 0.0
    for _ in range(100):
        x = rng.uniform(-x_scale, x_scale)
        e = rng.uniform(-x_scale / 5, x_scale / 5)
        elapsed = int(rng.integers(1, 40))
        anchor = rng.uniform(0.0, x_scale * x_scale)
        inp = LookaheadInputs(x, e, elapsed, anchor)
        worst_series = max(worst_series, _rel_err(
            lookahead_criterion(inp, sys_, spec, ch),
            series_criterion(inp, sys_, spec, ch)))
        y = x * x
        worst_plus = max(worst_plus, _rel_err(
            reception_criterion(y, sys_, spec, ch),
            series_criterion(LookaheadInputs(x, 0.0, 0, y), sys_, spec, ch)))

    worst_idle = 0.0
    worst_rx = 0.0
    for _ in range(100):
        inp = LookaheadInputs(
            rng.uniform(-x_scale, x_scale),
            rng.uniform(-x_scale / 5, x_scale / 5),
            int(rng.integers(1, 40)),
            rng.uniform(0.1, x_scale * x_scale))
        res = tower_residuals(inp, sys_, spec, ch)
        if ch.p < 1.0:
            worst_idle = max(worst_idle, abs(res.idle))
        worst_rx = max(worst_rx, abs(res.reception))

    checks = [
        ("lookahead_series_agreement", worst_series <= 1e-8,
         f"worst relative error {worst_series:.3g} (tolerance 1e-08)"),
        ("reception_series_agreement", worst_plus <= 1e-8,
         f"worst relative error {worst_plus:.3g} (tolerance 1e-08)"),
        ("tower_identity_reception", worst_rx <= 1e-10,
         f"worst residual {worst_rx:.3g} (tolerance 1e-10)"),
    ]
    if ch.p < 1.0:
        checks.insert(2, ("tower_identity_idle", worst_idle <= 1e-10,
                          f"worst residual {worst_idle:.3g} (tolerance 1e-10)"))
    return checks


def _vector_quick_checks(cfg: RunConfig) -> list[tuple[str, bool, str]]:
    sys_, spec, ch = cfg.system, cfg.spec, cfg.channel
    rng = np.random.default_rng(20240517)
    scale = max(float(np.linalg.norm(np.atleast_1d(cfg.x0))), 10.0)

    worst_series = 0.0
    worst_plus = 0.0
    for _ in range(100):
        inp = VectorBoundInputs(
            rng.uniform(0.0, scale), rng.uniform(0.0, scale / 5),
            int(rng.integers(1, 30)), rng.uniform(0.0, scale * scale))
        worst_series = max(worst_series, _rel_err(
            norm_lookahead_bound(inp, sys_, spec, ch),
            series_norm_criterion(inp, sys_, spec, ch)))
        y = rng.uniform(0.0, scale * scale)
        post = VectorBoundInputs(float(np.sqrt(y)), 0.0, 0, y)
        worst_plus = max(worst_plus, abs(
            norm_lookahead_bound(post, sys_, spec, ch)
            - norm_reception_bound(y, sys_, spec, ch)))

    return [
        ("norm_series_agreement", worst_series <= 1e-8,
         f"worst relative error {worst_series:.3g} (tolerance 1e-08)"),
        ("post_reception_identity", worst_plus <= 1e-9,
         f"worst residual {worst_plus:.3g} (tolerance 1e-09)"),
    ]


def _full_checks(cfg: RunConfig) -> list[tuple[str, bool, str]]:
    spec, ch = cfg.spec, cfg.channel
    gains = cfg.system.gain_bounds()

    b_star = monotone_threshold(gains, spec.c)
    u = crossing_gap_root(spec.B, gains, spec.c)
    grid = np.geomspace(spec.B * (1.0 + 1e-9), 100.0 * u, 200)

    sign = verify_sign_monotone(gains, spec, grid, s_max=500)
    sign_detail = ("no sign relapse on 200 energies, steps up to 500"
                   if sign.ok else
                   f"sign relapse at y={sign.violation[0]:.6g}, s={sign.violation[1]}")

    bad_cases = [(float(y), lab.case) for y in grid
                 for lab in [classify_case(float(y), gains, spec)]
                 if lab.case in ("III", "IV")]
    case_detail = ("only benign cases on the energy grid" if not bad_cases else
                   f"case {bad_cases[0][1]} at y={bad_cases[0][0]:.6g}"
                   f" (B={spec.B:.6g} vs threshold {b_star:.6g})")

    dcal = np.arange(0, 21, dtype=float)
    vals = np.array([criterion_upper_bound(d, gains, spec, ch) for d in dcal])
    second = np.diff(vals, 2)
    convex = bool(np.all(second > 0.0))
    convex_detail = (f"second differences in [{second.min():.3g}, {second.max():.3g}]"
                     if convex else
                     f"non-convex second difference {second.min():.3g}")

    return [
        ("performance_sign_discipline", sign.ok, sign_detail),
        ("case_classification", not bad_cases, case_detail),
        ("uniform_bound_convexity", convex, convex_detail),
    ]


def _cmd_validate(args) -> int:
    cfg = build_run_config(read_config(args.config))
    failed_gate = _gate_assumptions(cfg)
    if failed_gate is not None:
        return failed_gate

    if isinstance(cfg.system, ScalarSystem):
        checks = _scalar_quick_checks(cfg)
    else:
        checks = _vector_quick_checks(cfg)
    if args.level == "full":
        checks.extend(_full_checks(cfg))

    first_fail = None
    for name, ok, detail in checks:
        print(f"  [{'ok' if ok else 'FAIL'}] {name}: {detail}")
        if not ok and first_fail is None:
            first_fail = name
    if first_fail is None:
        print(f"validation ({args.level}): pass ({len(checks)} checks)")
        return 0
    print(f"validation ({args.level}): FAIL (first failing check: {first_fail})")
    return 4


# ----------------------------------------------------------------- sweep


def _derive_seed(root_seed: int, index: int) -> int:
    '''Per-sweep-point seed; index 0 keeps the root so a single-value
    sweep is the same experiment as simulate.'''
    if index == 0:
        return root_seed
    words = np.random.SeedSequence(
        entropy=root_seed, spawn_key=(0x5EED, index)).generate_state(2)
    return int(words[0]) << 32 | int(words[1])


def _cmd_sweep(args) -> int:
    raw = read_config(args.config)
    base = build_run_config(raw)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        print("sweep: --values is empty", file=sys.stderr)
        return 1

    out = _ensure_out(args.out)
    summary_rows = []
    tail_fracs = []
    numeric_values = []
    for i, value in enumerate(values):
        raw_i = apply_param(raw, args.param, value)
        seed_i = _derive_seed(base.seed, i)
        if args.param != "run.seed":
            raw_i = apply_param(raw_i, "run.seed", str(seed_i))
        cfg_i = build_run_config(raw_i)
        if cfg_i.policy.kind in ("event", "event_vector"):
            failed = _gate_assumptions(cfg_i)
            if failed is not None:
                return failed
        stats, _ = _run_and_write(cfg_i, out, f"_{i}", no_plot=True)
        obj = objective_check(stats, cfg_i.spec, cfg_i.x0)
        tail = tail_fraction(stats)
        summary_rows.append([args.param, float(value), cfg_i.seed, tail,
                             obj.worst_ratio, obj.passed,
                             stats.transmissions, stats.receptions])
        tail_fracs.append(tail)
        numeric_values.append(float(value))
        print(f"{args.param} = {value}: tail fraction {tail:.4f}, "
              f"worst ratio {obj.worst_ratio:.4f}, "
              f"objective {'pass' if obj.passed else 'FAIL'}")

    summary_path = os.path.join(out, "summary.csv")
    _write_csv(summary_path,
               ["param", "value", "seed", "tail_frac", "worst_ratio",
                "objective_pass", "transmissions", "receptions"],
               summary_rows)
    print(f"wrote {summary_path}")
    if not args.no_plot:
        from .plots import render_sweep_figure
        fig_path = os.path.join(out, "sweep.png")
        render_sweep_figure(numeric_values, tail_fracs, args.param, fig_path)
        print(f"wrote {fig_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
