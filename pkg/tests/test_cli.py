"""End-to-end CLI behavior: exit codes, CSV artifacts, and plots."""

from pathlib import Path

import pytest

from etcsim import SeriesDivergenceError, cli

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
SCALAR_CONFIG = str(CONFIG_DIR / "scalar_event_d1.ini")
VECTOR_CONFIG = str(CONFIG_DIR / "vector_event_d1.ini")

SMALL_SCALAR = """\
[system]
a = 1.05
a_bar = 0.931
M = 1.0

[channel]
p = 0.6

[spec]
c = 0.98
B = 15.5
D = 1

[run]
horizon = 40
n_runs = {n_runs}
seed = 20240901
x0 = 155.0

[policy]
kind = event
"""

SMALL_VECTOR = """\
[system]
A = 0.8, 0.5, -0.5, 1.0
Q = 1.0, 0.0, 0.0, 1.0
L = 0.1310, -0.5, 0.5, -1.882
Sigma = 0.1, 0.05, 0.05, 0.1

[channel]
p = 0.8

[spec]
c = 0.98
B = 2.93
D = 1

[run]
horizon = 20
n_runs = 1
seed = 777
x0 = 29.3, -14.65

[policy]
kind = event_vector
"""

EXPECTED_CERTIFY_CSV = (
    "key,value\n"
    "B_c,9.2799966805900223\n"
    "B_star,12.923243715111994\n"
    "D,1\n"
    "feasible,true\n"
    "Bcal,2\n"
    "fraction_bound,0.45454545454545453\n"
    "T_max,1\n"
)


def _small(tmp_path, n_runs=1, name="small.ini", text=SMALL_SCALAR):
    path = tmp_path / name
    path.write_text(text.format(n_runs=n_runs) if "{n_runs}" in text else text)
    return str(path)


# ---------------------------------------------------------------- certify


def test_certify_feasible(tmp_path, capsys):
    out = tmp_path / "reports" / "d1"
    assert cli.main(["certify", "--config", SCALAR_CONFIG,
                     "--out", str(out)]) == 0
    assert (out / "certify.csv").read_text() == EXPECTED_CERTIFY_CSV
    stdout = capsys.readouterr().out
    assert "trigger at horizon D = 1: feasible" in stdout
    assert "certified silent backoff: 2" in stdout


def test_certify_vector(tmp_path, capsys):
    assert cli.main(["certify", "--config", VECTOR_CONFIG,
                     "--out", str(tmp_path)]) == 0
    text = (tmp_path / "certify.csv").read_text()
    assert "B_star,2.4376751910329708\n" in text
    assert "feasible,true\n" in text
    assert "largest feasible horizon: 2" in capsys.readouterr().out


def test_certify_infeasible_exit_2(tmp_path, capsys):
    cfg = _small(tmp_path, text=SMALL_SCALAR.replace("B = 15.5", "B = 10.0"))
    assert cli.main(["certify", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "infeasible" in capsys.readouterr().out
    assert "feasible,false\n" in (tmp_path / "certify.csv").read_text()


def test_assumption_gate_exit_1(tmp_path, capsys):
    cfg = _small(tmp_path, text=SMALL_SCALAR.replace("p = 0.6", "p = 0.05"))
    assert cli.main(["certify", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "certification aborted" in capsys.readouterr().err
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path),
                     "--no-plot"]) == 1
    assert "standing assumptions violated" in capsys.readouterr().err
    assert cli.main(["validate", "--config", cfg]) == 1


def test_config_errors_exit_1(tmp_path, capsys):
    assert cli.main(["certify", "--config", str(tmp_path / "none.ini"),
                     "--out", str(tmp_path)]) == 1
    assert "config error" in capsys.readouterr().err


def test_usage_errors_exit_1(capsys):
    for argv in (["certify"], ["frobnicate"],
                 ["validate", "--config", "x.ini", "--level", "medium"]):
        with pytest.raises(SystemExit) as exc:
            cli.main(argv)
        assert exc.value.code == 1
    assert "error" in capsys.readouterr().err


# ---------------------------------------------------------------- simulate


def test_simulate_single_run_artifacts(tmp_path, capsys):
    cfg = _small(tmp_path)
    out = tmp_path / "sim"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "objective: pass" in stdout

    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "k,x,t,r,h,G"
    assert lines[1] == "0,155,1,1,0,"
    assert len(lines) == 42  # header + steps 0..40

    ens = (out / "ensemble.csv").read_text().splitlines()
    assert ens[0] == "k,mean_x2,bound,frac,mean_h"
    assert (out / "ensemble.png").exists()
    assert (out / "trajectory.png").exists()


def test_simulate_no_plot_and_reruns_identical(tmp_path):
    cfg = _small(tmp_path)
    out1, out2 = tmp_path / "one", tmp_path / "two"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out1),
                     "--no-plot"]) == 0
    assert cli.main(["simulate", "--config", cfg, "--out", str(out2),
                     "--no-plot"]) == 0
    assert not list(out1.glob("*.png"))
    for name in ("ensemble.csv", "trajectory.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_simulate_multi_run_skips_trajectory(tmp_path):
    cfg = _small(tmp_path, n_runs=3)
    out = tmp_path / "multi"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out),
                     "--no-plot"]) == 0
    assert (out / "ensemble.csv").exists()
    assert not (out / "trajectory.csv").exists()


def test_simulate_vector_trace_header(tmp_path):
    cfg = _small(tmp_path, text=SMALL_VECTOR, name="vec.ini")
    out = tmp_path / "vec"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out),
                     "--no-plot"]) == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "k,x0,x1,t,r,h,G"
    assert lines[1] == "0,29.300000000000001,-14.65,1,1,0,"


def test_simulate_divergence_exit_3(tmp_path, monkeypatch, capsys):
    def explode(cfg, processes=None):
        raise SeriesDivergenceError("synthetic tail ratio")

    monkeypatch.setattr(cli, "run_ensemble", explode)
    cfg = _small(tmp_path)
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path),
                     "--no-plot"]) == 3
    assert "divergent criterion series" in capsys.readouterr().err


# ---------------------------------------------------------------- validate


def test_validate_quick_scalar(capsys):
    assert cli.main(["validate", "--config", SCALAR_CONFIG]) == 0
    stdout = capsys.readouterr().out
    assert "[ok] lookahead_series_agreement" in stdout
    assert "[ok] tower_identity_idle" in stdout
    assert "validation (quick): pass (4 checks)" in stdout


def test_validate_full_scalar(capsys):
    assert cli.main(["validate", "--config", SCALAR_CONFIG,
                     "--level", "full"]) == 0
    stdout = capsys.readouterr().out
    assert "[ok] performance_sign_discipline" in stdout
    assert "[ok] case_classification" in stdout
    assert "[ok] uniform_bound_convexity" in stdout
    assert "validation (full): pass (7 checks)" in stdout


def test_validate_quick_vector(capsys):
    assert cli.main(["validate", "--config", VECTOR_CONFIG]) == 0
    stdout = capsys.readouterr().out
    assert "[ok] norm_series_agreement" in stdout
    assert "validation (quick): pass (2 checks)" in stdout


def test_validate_forced_failure_exit_4(monkeypatch, capsys):
    monkeypatch.setattr(
        cli, "_scalar_quick_checks",
        lambda cfg: [("forced_failure", False, "synthetic")])
    assert cli.main(["validate", "--config", SCALAR_CONFIG]) == 4
    stdout = capsys.readouterr().out
    assert "[FAIL] forced_failure: synthetic" in stdout
    assert "first failing check: forced_failure" in stdout


# ------------------------------------------------------------------- sweep


def test_sweep_schema_and_point_zero_reproduces_simulate(tmp_path):
    cfg = _small(tmp_path, n_runs=4)
    sweep_out = tmp_path / "swp"
    assert cli.main(["sweep", "--config", cfg, "--param", "channel.p",
                     "--values", "0.6,1.0", "--out", str(sweep_out),
                     "--no-plot"]) == 0
    summary = (sweep_out / "summary.csv").read_text().splitlines()
    assert summary[0] == ("param,value,seed,tail_frac,worst_ratio,"
                          "objective_pass,transmissions,receptions")
    assert len(summary) == 3
    first = summary[1].split(",")
    assert first[0] == "channel.p"
    assert first[2] == "20240901"  # point 0 keeps the root seed
    second = summary[2].split(",")
    assert second[2] != "20240901"
    # With a perfect channel every transmission is received.
    assert second[6] == second[7]

    sim_out = tmp_path / "ref"
    assert cli.main(["simulate", "--config", cfg, "--out", str(sim_out),
                     "--no-plot"]) == 0
    assert (sweep_out / "ensemble_0.csv").read_bytes() == \
        (sim_out / "ensemble.csv").read_bytes()


def test_sweep_writes_figure_by_default(tmp_path):
    cfg = _small(tmp_path, n_runs=2)
    out = tmp_path / "swpfig"
    assert cli.main(["sweep", "--config", cfg, "--param", "spec.B",
                     "--values", "15.5", "--out", str(out)]) == 0
    assert (out / "sweep.png").exists()
    assert not (out / "ensemble_0.png").exists()


def test_sweep_bad_arguments_exit_1(tmp_path, capsys):
    cfg = _small(tmp_path)
    assert cli.main(["sweep", "--config", cfg, "--param", "channel.p",
                     "--values", " , ", "--out", str(tmp_path)]) == 1
    assert "--values is empty" in capsys.readouterr().err
    assert cli.main(["sweep", "--config", cfg, "--param", "system.Q",
                     "--values", "1.0", "--out", str(tmp_path)]) == 1
    assert "config error" in capsys.readouterr().err
