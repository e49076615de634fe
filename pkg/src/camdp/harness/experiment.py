"""Multi-seed experiment execution with reproducible CSV artifacts.

Each seed runs an independent learner (optionally in a worker process);
per-seed time series land in `series_seed<k>.csv`, final policies in
`policy_seed<k>.txt`, and the cross-seed summary in `summary.csv`. All
floats are written with shortest round-trip repr and every CSV carries the
config hash, so rerunning an identical config reproduces every byte, and
parallel and sequential execution write identical files.
"""

from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import oracles
from ..learner import LearnerEngine, initial_state
from ..policy import SoftmaxPolicy, save_policy_checkpoint
from .config import ExperimentConfig

__all__ = ["run_experiment", "RunSummary", "SeedOutcome", "summary_from_csvs"]


def _fmt(x) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class SeedOutcome:
    seed: int
    window_avg_cost: float
    window_avg_constraints: tuple[float, ...]
    final_multipliers: tuple[float, ...]
    window_steps: int


@dataclass(frozen=True)
class RunSummary:
    """Across-seed statistics of the trailing-window averages.

    Standard errors are sample standard deviations divided by sqrt(#seeds).
    """

    outcomes: tuple[SeedOutcome, ...]
    mean_cost: float
    stderr_cost: float
    mean_constraints: tuple[float, ...]
    stderr_constraints: tuple[float, ...]
    window_steps: int
    config_hash: str

    @property
    def n_seeds(self) -> int:
        return len(self.outcomes)


def _stderr(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / np.sqrt(values.size))


def _make_oracle_probe(model, policy, features):
    def probe(theta, gamma):
        pol = policy.with_theta(theta)
        lag, _, _ = oracles.exact_lagrangian(model, pol, gamma)
        grad = oracles.exact_policy_gradient(model, pol, gamma)
        v_star = oracles.td_fixed_point(model, pol, gamma, features).v_star
        return lag, float(grad @ grad), v_star
    return probe


def _series_header(n_constraints: int, oracle: bool) -> list[str]:
    cols = ["t", "avg_cost_run", "lagrange_est"]
    cols += [f"constraint_est_{k + 1}" for k in range(n_constraints)]
    cols += [f"multiplier_{k + 1}" for k in range(n_constraints)]
    cols += ["theta_norm", "v_norm"]
    if oracle:
        cols += ["exact_lagrangian", "grad_sq_norm", "critic_err_sq"]
    return cols


def run_seed(config: ExperimentConfig, seed: int) -> SeedOutcome:
    """Execute one seed and write its artifacts. Deterministic in (config, seed)."""
    model, features = config.build_model_features()
    policy = SoftmaxPolicy.for_model(model, temperature=config.temperature)
    engine = LearnerEngine(
        model, policy, features, config.schedule(), config.projections(),
        algorithm=config.algorithm, freeze_actor=config.freeze_actor,
        freeze_multipliers=config.freeze_multipliers)
    start = None if config.start_state < 0 else config.start_state
    state = initial_state(
        model, policy, features, algorithm=config.algorithm,
        fisher_p=config.fisher_p, fisher_ridge=config.fisher_ridge,
        fisher_refresh_every=config.fisher_refresh_every, start_state=start)
    rng = np.random.Generator(np.random.PCG64(seed))
    probe = _make_oracle_probe(model, policy, features) if config.oracle \
        else None
    track = None
    if config.freeze_actor and config.freeze_multipliers and config.oracle:
        # frozen runs track the squared distance to the fixed critic target
        track = oracles.td_fixed_point(
            model, policy, state.multipliers, features).v_star
    result = engine.run(
        state, rng, total_steps=config.total_steps,
        snapshot_every=config.snapshot_every,
        window_frac=config.window_frac, oracle_probe=probe,
        track_v_star=track)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_series(out_dir / f"series_seed{seed}.csv", config, result, model)
    save_policy_checkpoint(policy.with_theta(result.final.theta),
                           out_dir / f"policy_seed{seed}.txt")
    if result.critic_err_sq is not None:
        np.save(out_dir / f"critic_err_seed{seed}.npy", result.critic_err_sq)
    return SeedOutcome(
        seed=seed, window_avg_cost=result.window_avg_cost,
        window_avg_constraints=tuple(result.window_avg_constraints),
        final_multipliers=tuple(result.final.multipliers),
        window_steps=result.window_steps)


def _write_series(path, config, result, model) -> None:
    snaps = result.snapshots
    n_cons = model.n_constraints
    cols = _series_header(n_cons, config.oracle)
    n_rows = snaps["t"].size
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config.config_hash()}\n")
        fh.write(",".join(cols) + "\n")
        for i in range(n_rows):
            row = [str(int(snaps["t"][i])),
                   _fmt(snaps["raw_cost_est"][i]),
                   _fmt(snaps["avg_cost_est"][i])]
            row += [_fmt(snaps["constraint_ests"][i][k]) for k in range(n_cons)]
            row += [_fmt(snaps["multipliers"][i][k]) for k in range(n_cons)]
            row += [_fmt(snaps["theta_norm"][i]), _fmt(snaps["v_norm"][i])]
            if config.oracle:
                row += [_fmt(snaps["exact_lagrangian"][i]),
                        _fmt(snaps["grad_sq_norm"][i]),
                        _fmt(snaps["critic_err_sq"][i])]
            fh.write(",".join(row) + "\n")


def run_experiment(config: ExperimentConfig) -> RunSummary:
    """Run every seed, write per-seed series plus the summary CSV.

    Seeds execute in worker processes when `parallel` is set; results are
    identical to sequential execution because each seed's computation is a
    pure function of (config, seed) and files are merged in seed order.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(config.canonical_text())

    seeds = list(config.seeds)
    if config.parallel and len(seeds) > 1:
        workers = min(len(seeds), os.cpu_count() or 1)
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            outcomes = list(pool.map(run_seed, [config] * len(seeds), seeds))
    else:
        outcomes = [run_seed(config, seed) for seed in seeds]

    n_cons = len(outcomes[0].window_avg_constraints)
    costs = np.array([o.window_avg_cost for o in outcomes])
    summary = RunSummary(
        outcomes=tuple(outcomes),
        mean_cost=float(costs.mean()), stderr_cost=_stderr(costs),
        mean_constraints=tuple(
            float(np.mean([o.window_avg_constraints[k] for o in outcomes]))
            for k in range(n_cons)),
        stderr_constraints=tuple(
            _stderr(np.array([o.window_avg_constraints[k] for o in outcomes]))
            for k in range(n_cons)),
        window_steps=outcomes[0].window_steps,
        config_hash=config.config_hash())
    _write_summary(out_dir / "summary.csv", summary, n_cons)
    return summary


def _write_summary(path, summary: RunSummary, n_cons: int) -> None:
    cols = ["seed", "window_steps", "window_avg_cost"]
    cols += [f"window_avg_constraint_{k + 1}" for k in range(n_cons)]
    cols += [f"final_multiplier_{k + 1}" for k in range(n_cons)]
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={summary.config_hash}\n")
        fh.write(",".join(cols) + "\n")
        for o in summary.outcomes:
            row = [str(o.seed), str(o.window_steps), _fmt(o.window_avg_cost)]
            row += [_fmt(x) for x in o.window_avg_constraints]
            row += [_fmt(x) for x in o.final_multipliers]
            fh.write(",".join(row) + "\n")
        mean_row = ["mean", str(summary.window_steps), _fmt(summary.mean_cost)]
        mean_row += [_fmt(x) for x in summary.mean_constraints]
        mean_row += [""] * n_cons
        fh.write(",".join(mean_row) + "\n")
        se_row = ["stderr", str(summary.window_steps), _fmt(summary.stderr_cost)]
        se_row += [_fmt(x) for x in summary.stderr_constraints]
        se_row += [""] * n_cons
        fh.write(",".join(se_row) + "\n")


def summary_from_csvs(out_dir) -> dict:
    """Recompute cross-seed statistics by parsing the written CSV text.

    Independent verification path for summary.csv: the per-seed window
    means are re-read from their text representation (repr round-trips
    exactly) and the mean/stderr recomputed with the same estimators. The
    result carries both the recomputed and the written statistics so a
    caller can assert exact agreement.
    """
    out_dir = Path(out_dir)
    per_seed, written = [], {}
    with open(out_dir / "summary.csv") as fh:
        header_comment = fh.readline()
        cols = fh.readline().strip().split(",")
        for line in fh:
            cells = line.strip().split(",")
            if cells[0] in ("mean", "stderr"):
                written[cells[0]] = cells
                continue
            per_seed.append({c: cells[i] for i, c in enumerate(cols)})
    costs = np.array([float(r["window_avg_cost"]) for r in per_seed])
    cons_cols = [c for c in cols if c.startswith("window_avg_constraint_")]
    idx = {c: i for i, c in enumerate(cols)}
    return {
        "config_hash": header_comment.strip().split("=", 1)[1],
        "mean_cost": float(costs.mean()),
        "stderr_cost": _stderr(costs),
        "mean_constraints": {
            c: float(np.mean([float(r[c]) for r in per_seed]))
            for c in cons_cols},
        "stderr_constraints": {
            c: _stderr(np.array([float(r[c]) for r in per_seed]))
            for c in cons_cols},
        "written_mean_cost": float(written["mean"][idx["window_avg_cost"]]),
        "written_stderr_cost": float(written["stderr"][idx["window_avg_cost"]]),
        "written_mean_constraints": {
            c: float(written["mean"][idx[c]]) for c in cons_cols},
        "written_stderr_constraints": {
            c: float(written["stderr"][idx[c]]) for c in cons_cols},
    }
