import filecmp
from pathlib import Path

import numpy as np
import pytest

from camdp.distributions import Deterministic
from camdp.harness.cli import main as cli_main
from camdp.harness.config import ConfigError, ExperimentConfig
from camdp.harness.diagnostics import (critic_error_curve, rate_diagnostic,
                                       rate_diagnostic_from_run)
from camdp.harness.experiment import run_experiment, summary_from_csvs
from camdp.harness.verify import verify_suite
from camdp.learner import StepSchedule
from camdp.model import StateFeatures, TabularCmdp
from camdp.model_io import save_model_file


def small_config(tmp_path, **overrides):
    base = dict(model="fixture:three_state", algorithm="cac",
                total_steps=2000, snapshot_every=500, seeds=(0, 1, 2),
                out_dir=str(tmp_path / "run"), parallel=False)
    base.update(overrides)
    return ExperimentConfig(**base)


# --- config parsing ------------------------------------------------------------

def test_config_parse_round_trip():
    cfg = ExperimentConfig.parse(
        "model = grid:5\nalgorithm = cnac\nseeds = 0..3\n"
        "total_steps = 100\nout_dir = /tmp/x\nfisher_ridge = 1e-4\n")
    assert cfg.model == "grid:5"
    assert cfg.seeds == (0, 1, 2, 3)
    assert cfg.fisher_ridge == 1e-4
    again = ExperimentConfig.parse(cfg.canonical_text())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_config_rejects_unknown_key():
    with pytest.raises(ConfigError, match="unknown key"):
        ExperimentConfig.parse("modle = grid:5\n")


def test_config_rejects_duplicates_and_bad_values():
    with pytest.raises(ConfigError, match="duplicate"):
        ExperimentConfig.parse("seeds = 0\nseeds = 1\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.parse("oracle = maybe\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.parse("algorithm = sarsa\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.parse("seeds = 0,0\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.parse("model = grid:5\nfeature_mode = bundled\n")


def test_config_oracle_size_limit():
    # 51 x 51 = 2601 states crosses the documented 2500-state oracle limit
    big = ExperimentConfig(model="grid:51", oracle=True, seeds=(0,),
                           total_steps=10, out_dir="/tmp/x")
    with pytest.raises(ConfigError, match="oracle"):
        big.build_model_features()
    no_oracle = ExperimentConfig(model="grid:51", oracle=False, seeds=(0,),
                                 total_steps=10, out_dir="/tmp/x")
    no_oracle.build_model_features()


# --- experiments ---------------------------------------------------------------

def zero_cost_model_file(tmp_path):
    p = np.array([[[0.6, 0.4], [0.2, 0.8]],
                  [[0.5, 0.5], [0.7, 0.3]]])
    model = TabularCmdp(2, 2, p, constraints=[{}], alphas=[0.5], u_c=1.0)
    path = tmp_path / "zero.cmdp"
    save_model_file(model, path)
    return path


def test_zero_cost_model_gives_zero_summary(tmp_path):
    path = zero_cost_model_file(tmp_path)
    cfg = small_config(tmp_path, model=f"file:{path}", total_steps=1000)
    summary = run_experiment(cfg)
    assert summary.mean_cost == 0.0
    assert summary.stderr_cost == 0.0
    assert summary.mean_constraints[0] == 0.0


def _run_dir_files(out_dir):
    return sorted(p.name for p in Path(out_dir).iterdir() if p.is_file())


def test_reruns_are_byte_identical(tmp_path):
    cfg_a = small_config(tmp_path, out_dir=str(tmp_path / "a"))
    cfg_b = small_config(tmp_path, out_dir=str(tmp_path / "b"))
    run_experiment(cfg_a)
    run_experiment(cfg_b)
    names_a = _run_dir_files(cfg_a.out_dir)
    names_b = _run_dir_files(cfg_b.out_dir)
    assert names_a == names_b
    for name in names_a:
        if name == "config.txt":
            continue            # differs only in out_dir
        assert filecmp.cmp(Path(cfg_a.out_dir) / name,
                           Path(cfg_b.out_dir) / name, shallow=False), name


def test_parallel_matches_sequential(tmp_path):
    seq = small_config(tmp_path, out_dir=str(tmp_path / "seq"),
                       parallel=False)
    par = small_config(tmp_path, out_dir=str(tmp_path / "par"),
                       parallel=True)
    run_experiment(seq)
    run_experiment(par)
    for name in _run_dir_files(seq.out_dir):
        if name == "config.txt":
            continue
        assert filecmp.cmp(Path(seq.out_dir) / name,
                           Path(par.out_dir) / name, shallow=False), name


def test_summary_recompute_matches_exactly(tmp_path):
    cfg = small_config(tmp_path)
    summary = run_experiment(cfg)
    rec = summary_from_csvs(cfg.out_dir)
    assert rec["config_hash"] == summary.config_hash
    assert rec["mean_cost"] == rec["written_mean_cost"]
    assert rec["stderr_cost"] == rec["written_stderr_cost"]
    for col in rec["mean_constraints"]:
        assert rec["mean_constraints"][col] == \
            rec["written_mean_constraints"][col]
        assert rec["stderr_constraints"][col] == \
            rec["written_stderr_constraints"][col]


def test_series_headers_carry_hash_and_columns(tmp_path):
    cfg = small_config(tmp_path, oracle=True, feature_mode="bundled")
    run_experiment(cfg)
    lines = (Path(cfg.out_dir) / "series_seed0.csv").read_text().splitlines()
    assert lines[0] == f"# config_hash={cfg.config_hash()}"
    cols = lines[1].split(",")
    assert cols[:3] == ["t", "avg_cost_run", "lagrange_est"]
    assert "grad_sq_norm" in cols and "critic_err_sq" in cols


# --- diagnostics ---------------------------------------------------------------

def test_rate_diagnostic_constant_series():
    ts = np.logspace(0, 4, 200)
    fit = rate_diagnostic(ts, np.full(200, 3.0))
    assert fit is not None
    assert fit.slope == pytest.approx(0.0, abs=1e-12)


def test_rate_diagnostic_recovers_power_law():
    ts = np.unique(np.logspace(0, 6, 400).astype(int)).astype(float)
    series = ts ** -0.4
    fit = rate_diagnostic(ts, series)
    assert fit.slope == pytest.approx(-0.4, abs=1e-6)


def test_rate_diagnostic_skips_short_series():
    assert rate_diagnostic([1, 10, 99], [1.0, 0.5, 0.2]) is None


def test_rate_diagnostic_from_run(tmp_path):
    cfg = small_config(tmp_path, oracle=True, feature_mode="bundled",
                       total_steps=4000, snapshot_every=2,
                       seeds=(0,))
    run_experiment(cfg)
    fits = rate_diagnostic_from_run(cfg.out_dir)
    assert set(fits) == {0}
    assert fits[0] is not None


def test_critic_error_curve_nonnegative_and_flat_at_fixed_point():
    # v0 = v*: the error sequence is identically zero and so is the curve
    err = np.zeros(5001)
    curve = critic_error_curve(err, StepSchedule(), 1.0, 0.5,
                               [0, 100, 5000])
    assert np.all(curve == 0.0)
    rng = np.random.default_rng(0)
    noisy = rng.uniform(0.0, 1.0, size=2001)
    curve = critic_error_curve(noisy, StepSchedule(), 1.0, 0.5, range(0, 2001, 50))
    assert np.all(curve >= 0.0)


def test_frozen_run_writes_per_step_errors(tmp_path):
    cfg = small_config(tmp_path, oracle=True, feature_mode="bundled",
                       freeze_actor=True, freeze_multipliers=True,
                       seeds=(0,), total_steps=500)
    run_experiment(cfg)
    err = np.load(Path(cfg.out_dir) / "critic_err_seed0.npy")
    assert err.shape == (501,)
    assert err[0] > 0.0                      # starts away from the target


# --- verify suite ---------------------------------------------------------------

@pytest.mark.parametrize("name", ["two_state", "three_state", "five_state"])
def test_verify_suite_passes_on_fixtures(name):
    report = verify_suite(name)
    assert report.ok, report.render()


def test_verify_suite_flags_oversized_features():
    fx_report = verify_suite("two_state",
                             features=StateFeatures(
                                 np.array([[2.0, 0.0], [0.0, 0.5]])))
    assert not fx_report.ok
    assert any("feature norms" in c.name and not c.passed
               for c in fx_report.checks)


def test_verify_suite_reports_non_ergodic_chain():
    p = np.zeros((2, 1, 2))
    p[0, 0] = [1.0, 0.0]
    p[1, 0] = [0.0, 1.0]
    model = TabularCmdp(2, 1, p, cost={(0, 0): Deterministic(1.0)},
                        constraints=[{}], alphas=[0.5], u_c=2.0)
    report = verify_suite(model)
    assert not report.ok
    assert any("ergodic" in c.name and not c.passed for c in report.checks)


# --- CLI -----------------------------------------------------------------------

def test_cli_gridworld_describe(capsys):
    assert cli_main(["gridworld", "describe", "--side", "5",
                     "--canonical"]) == 0
    out = capsys.readouterr().out
    assert "grid world" in out


def test_cli_gridworld_generate_and_verify(tmp_path, capsys):
    out = tmp_path / "g.cmdp"
    assert cli_main(["gridworld", "generate", "--side", "3",
                     "--out", str(out)]) == 0
    assert out.exists()
    assert cli_main(["verify", "--model", str(out)]) == 0


def test_cli_verify_fixture(capsys):
    assert cli_main(["verify", "--fixture", "three_state"]) == 0
    assert "all checks passed" in capsys.readouterr().out


def test_cli_run_bad_config_exits_two(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("not_a_key = 1\n")
    assert cli_main(["run", str(cfg)]) == 2


def test_cli_run_and_report(tmp_path, capsys):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(
        "model = fixture:three_state\nalgorithm = cac\n"
        f"total_steps = 1000\nsnapshot_every = 200\nseeds = 0,1\n"
        f"out_dir = {tmp_path / 'out'}\nparallel = false\n")
    assert cli_main(["run", str(cfg_path)]) == 0
    assert cli_main(["report", str(tmp_path / "out")]) == 0
    figures = list((tmp_path / "out" / "figures").glob("*.png"))
    assert len(figures) >= 3


def test_cli_diag_rate(tmp_path, capsys):
    cfg_path = tmp_path / "rate.cfg"
    cfg_path.write_text(
        "model = fixture:three_state\nalgorithm = cac\noracle = true\n"
        "feature_mode = bundled\ntotal_steps = 4000\nsnapshot_every = 2\n"
        f"seeds = 0\nout_dir = {tmp_path / 'out'}\nparallel = false\n")
    assert cli_main(["run", str(cfg_path)]) == 0
    assert cli_main(["diag", "rate", str(tmp_path / "out")]) == 0
    assert "slope" in capsys.readouterr().out


def test_cli_diag_critic_error(tmp_path, capsys):
    cfg_path = tmp_path / "frozen.cfg"
    cfg_path.write_text(
        "model = fixture:three_state\nalgorithm = cac\noracle = true\n"
        "feature_mode = bundled\nfreeze_actor = true\n"
        "freeze_multipliers = true\ntotal_steps = 2000\n"
        f"snapshot_every = 500\nseeds = 0\nout_dir = {tmp_path / 'out'}\n"
        "parallel = false\n")
    assert cli_main(["run", str(cfg_path)]) == 0
    assert cli_main(["diag", "critic-error", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "critic_curve_seed0.csv").exists()
    assert "averaged error" in capsys.readouterr().out
