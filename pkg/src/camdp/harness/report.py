"""Figure rendering for run directories.

Reads the per-seed series CSVs and draws the across-seed mean of each
tracked quantity with a standard-error band, one PNG per quantity, next to
the CSVs. The CSVs stay the canonical artifact; figures are a convenience
layer on top of them.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import ExperimentConfig  # noqa: E402
from .diagnostics import _read_series  # noqa: E402

__all__ = ["render_figures"]

_PANELS = [
    ("avg_cost_run", "average cost estimate", "avg_cost"),
    ("constraint_est_1", "average constraint cost estimate", "avg_constraint_cost"),
    ("multiplier_1", "multiplier", "multiplier"),
    ("lagrange_est", "penalized cost estimate", "lagrange_estimate"),
    ("grad_sq_norm", "squared gradient norm (exact)", "grad_sq_norm"),
    ("critic_err_sq", "squared critic error (exact)", "critic_err_sq"),
]


def render_figures(run_dir, out_subdir: str = "figures") -> list[Path]:
    run_dir = Path(run_dir)
    config = ExperimentConfig.parse((run_dir / "config.txt").read_text())
    series = {seed: _read_series(run_dir / f"series_seed{seed}.csv")
              for seed in config.seeds}
    first = next(iter(series.values()))
    ts = first["t"]
    fig_dir = run_dir / out_subdir
    fig_dir.mkdir(exist_ok=True)
    written = []
    for column, label, stem in _PANELS:
        if column not in first:
            continue
        stack = np.stack([series[seed][column] for seed in config.seeds])
        mean = stack.mean(axis=0)
        if stack.shape[0] > 1:
            stderr = stack.std(axis=0, ddof=1) / np.sqrt(stack.shape[0])
        else:
            stderr = np.zeros_like(mean)
        fig, ax = plt.subplots(figsize=(7, 4.2))
        ax.plot(ts, mean, lw=1.4, color="tab:blue",
                label=f"mean over {stack.shape[0]} seeds")
        ax.fill_between(ts, mean - stderr, mean + stderr, alpha=0.25,
                        color="tab:blue", label="std error")
        if column == "constraint_est_1":
            model, _ = config.build_model_features()
            ax.axhline(model.alphas[0], color="tab:red", ls="--", lw=1.0,
                       label="threshold")
        ax.set_xlabel("iteration")
        ax.set_ylabel(label)
        ax.set_title(f"{config.algorithm} on {config.model}")
        ax.legend(loc="best", fontsize=9)
        fig.tight_layout()
        path = fig_dir / f"{stem}.png"
        fig.savefig(path, dpi=130)
        plt.close(fig)
        written.append(path)
    return written
