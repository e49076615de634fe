"""Constrained average-cost actor-critic learners with exact verification
oracles and a grid-world benchmark harness."""

from .distributions import Categorical, Deterministic, DiscreteUniformInt
from .fixtures import get_fixture
from .gridworld import GridSpec, build_gridworld, canonical_spec, canonical_specs
from .learner import (FisherState, LearnerEngine, LearnerState, ProjectionSpec,
                      StepSchedule, cac_step, cnac_step, fisher_update,
                      initial_state, mixing_time, project_critic,
                      project_multiplier, step_sizes, td_error)
from .model import InfeasibleActionError, StateFeatures, TabularCmdp, sample_step
from .model_io import dump_model, load_model, load_model_file, save_model_file
from .policy import SoftmaxPolicy, policy_smoothness_report

__all__ = [
    "Categorical", "Deterministic", "DiscreteUniformInt",
    "TabularCmdp", "StateFeatures", "InfeasibleActionError", "sample_step",
    "dump_model", "load_model", "save_model_file", "load_model_file",
    "SoftmaxPolicy", "policy_smoothness_report",
    "StepSchedule", "ProjectionSpec", "LearnerState", "FisherState",
    "LearnerEngine", "step_sizes", "project_critic", "project_multiplier",
    "td_error", "cac_step", "cnac_step", "fisher_update", "mixing_time",
    "initial_state",
    "GridSpec", "build_gridworld", "canonical_spec", "canonical_specs",
    "get_fixture",
]

__version__ = "0.1.0"
