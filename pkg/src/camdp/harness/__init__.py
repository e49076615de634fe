from .config import ConfigError, ExperimentConfig
from .diagnostics import (critic_error_curve, critic_error_diagnostic_from_run,
                          rate_diagnostic, rate_diagnostic_from_run)
from .experiment import RunSummary, run_experiment, summary_from_csvs
from .verify import VerifyReport, fd_gradient, verify_suite

__all__ = [
    "ConfigError", "ExperimentConfig", "RunSummary", "run_experiment",
    "summary_from_csvs", "rate_diagnostic", "rate_diagnostic_from_run",
    "critic_error_curve", "critic_error_diagnostic_from_run",
    "VerifyReport", "verify_suite", "fd_gradient",
]
