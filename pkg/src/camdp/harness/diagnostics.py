"""Convergence-trend diagnostics computed from run artifacts.

The rate diagnostic fits the decay exponent of the best-so-far squared
gradient norm; three-timescale theory puts it near -0.4 for the default
schedule, up to log factors and the linear-critic bias floor. The critic
diagnostic averages the squared critic error from the current mixing time
onward, the quantity the finite-time critic bounds control.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import oracles
from ..learner import StepSchedule, mixing_time
from ..policy import SoftmaxPolicy
from .config import ExperimentConfig

__all__ = ["RateFit", "rate_diagnostic", "rate_diagnostic_from_run",
           "critic_error_curve", "critic_error_diagnostic_from_run"]


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    n_points: int
    t_lo: float
    t_hi: float


def rate_diagnostic(ts, grad_sq, decades: float = 2.0) -> RateFit | None:
    """Least-squares slope of log best-so-far grad_sq against log t.

    Fits over the trailing `decades` decades of t. Returns None (diagnostic
    skipped) when the positive time axis spans fewer than three decades.
    """
    ts = np.asarray(ts, dtype=float)
    grad_sq = np.asarray(grad_sq, dtype=float)
    keep = ts > 0
    ts, grad_sq = ts[keep], grad_sq[keep]
    if ts.size < 3 or ts.max() / ts.min() < 1e3:
        return None
    best = np.minimum.accumulate(grad_sq)
    t_hi = ts.max()
    t_lo = t_hi / 10.0 ** decades
    win = ts >= t_lo
    x = np.log(ts[win])
    y = np.log(np.clip(best[win], 1e-300, None))
    slope, intercept = np.polyfit(x, y, 1)
    return RateFit(float(slope), float(intercept), int(win.sum()),
                   float(t_lo), float(t_hi))


def _read_series(path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        fh.readline()                      # config hash comment
        cols = fh.readline().strip().split(",")
        data = [[] for _ in cols]
        for line in fh:
            for i, cell in enumerate(line.strip().split(",")):
                data[i].append(float(cell))
    return {c: np.asarray(v) for c, v in zip(cols, data)}


def rate_diagnostic_from_run(run_dir) -> dict[int, RateFit | None]:
    """Per-seed rate fits from an oracle-attached run directory."""
    run_dir = Path(run_dir)
    config = ExperimentConfig.parse((run_dir / "config.txt").read_text())
    if not config.oracle:
        raise ValueError("rate diagnostic needs an oracle-attached run")
    fits = {}
    for seed in config.seeds:
        series = _read_series(run_dir / f"series_seed{seed}.csv")
        fits[seed] = rate_diagnostic(series["t"], series["grad_sq_norm"])
    return fits


def critic_error_curve(err_sq: np.ndarray, schedule: StepSchedule,
                       tv_b: float, tv_k: float,
                       eval_ts) -> np.ndarray:
    """Averaged squared critic error from the mixing time onward.

    curve(t) = (1 / (1 + t - tau_t)) * sum_{k=tau_t}^{t} err_sq[k], with
    tau_t the mixing lag of the fitted geometric ergodicity constants.
    """
    prefix = np.concatenate([[0.0], np.cumsum(err_sq)])
    out = np.empty(len(eval_ts))
    for i, t in enumerate(eval_ts):
        t = int(t)
        tau = mixing_time(tv_b, tv_k, schedule, t)
        tau = min(tau, t)
        out[i] = (prefix[t + 1] - prefix[tau]) / (1 + t - tau)
    return out


def critic_error_diagnostic_from_run(run_dir) -> dict[int, dict]:
    """Averaged-error curves for every seed of a frozen oracle run.

    Requires the run to have been executed with both freezes on and the
    oracle attached, so per-step squared errors were recorded. Ergodicity
    constants are fitted from the model at the frozen policy.
    """
    run_dir = Path(run_dir)
    config = ExperimentConfig.parse((run_dir / "config.txt").read_text())
    if not (config.freeze_actor and config.freeze_multipliers
            and config.oracle):
        raise ValueError("critic diagnostic needs a frozen, oracle-attached run")
    model, features = config.build_model_features()
    policy = SoftmaxPolicy.for_model(model, temperature=config.temperature)
    P = oracles.transition_matrix(model, policy)
    mu = oracles.chain_stationary(P)
    tv_b, tv_k, _ = oracles.tv_decay_fit(P, mu)
    schedule = config.schedule()
    out = {}
    for seed in config.seeds:
        err = np.load(run_dir / f"critic_err_seed{seed}.npy")
        ts = np.unique(np.concatenate([
            np.arange(0, err.size, max(1, config.snapshot_every)),
            [err.size - 1]]))
        curve = critic_error_curve(err, schedule, tv_b, tv_k, ts)
        out[seed] = {"t": ts, "curve": curve, "tv_b": tv_b, "tv_k": tv_k}
        _write_curve(run_dir / f"critic_curve_seed{seed}.csv",
                     config.config_hash(), ts, curve)
    return out


def _write_curve(path, config_hash, ts, curve) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        fh.write("t,avg_critic_err_sq\n")
        for t, c in zip(ts, curve):
            fh.write(f"{int(t)},{repr(float(c))}\n")
