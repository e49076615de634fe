"""Small reference models with strictly positive transition rows.

Strict positivity makes every softmax policy induce an irreducible aperiodic
chain, so the oracles apply everywhere in parameter space. Each fixture
bundles critic features whose span excludes the constant vector, which keeps
the critic fixed-point matrix negative definite. All fixtures carry a single
constraint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import Deterministic, DiscreteUniformInt
from .model import StateFeatures, TabularCmdp

__all__ = ["Fixture", "two_state", "three_state", "five_state",
           "get_fixture", "FIXTURES"]


@dataclass(frozen=True)
class Fixture:
    name: str
    model: TabularCmdp
    features: StateFeatures


def two_state() -> Fixture:
    """Two states, two actions, deterministic costs.

    Small enough that stationary laws and update arithmetic can be done by
    hand; used for the hand-executed single-step checks.
    """
    p = np.array([
        [[0.9, 0.1], [0.2, 0.8]],
        [[0.5, 0.5], [0.7, 0.3]],
    ])
    cost = {
        (0, 0): Deterministic(1.0), (0, 1): Deterministic(0.5),
        (1, 0): Deterministic(2.0), (1, 1): Deterministic(0.0),
    }
    h = {
        (0, 0): Deterministic(0.25), (0, 1): Deterministic(1.0),
        (1, 0): Deterministic(0.5), (1, 1): Deterministic(2.0),
    }
    model = TabularCmdp(2, 2, p, cost=cost, constraints=[h], alphas=[0.5],
                        u_c=4.0)
    features = StateFeatures(np.array([[1.0], [-0.5]]))
    return Fixture("two_state", model, features)


def three_state() -> Fixture:
    """Three states, two actions; one integer-noise cost entry.

    Action 1 is cheap on both costs, so the constraint is slack at the
    optimum and the multiplier settles at zero. The workhorse for critic
    convergence and gradient-decay diagnostics.
    """
    p = np.array([
        [[0.70, 0.20, 0.10], [0.10, 0.60, 0.30]],
        [[0.30, 0.50, 0.20], [0.05, 0.25, 0.70]],
        [[0.60, 0.20, 0.20], [0.10, 0.20, 0.70]],
    ])
    cost = {
        (0, 0): DiscreteUniformInt(1, 3), (0, 1): Deterministic(1.5),
        (1, 0): Deterministic(1.0), (1, 1): Deterministic(0.5),
        (2, 0): Deterministic(0.5), (2, 1): Deterministic(0.0),
    }
    h = {
        (0, 0): Deterministic(0.8), (0, 1): Deterministic(0.2),
        (1, 0): Deterministic(0.6), (1, 1): Deterministic(0.1),
        (2, 0): Deterministic(0.7), (2, 1): Deterministic(0.1),
    }
    model = TabularCmdp(3, 2, p, cost=cost, constraints=[h], alphas=[0.5],
                        u_c=4.0)
    features = StateFeatures(np.array([
        [0.90, 0.10],
        [0.10, 0.80],
        [0.45, -0.35],
    ]))
    return Fixture("three_state", model, features)


def five_state() -> Fixture:
    """Five states, three actions; rows drawn once from a fixed generator."""
    rng = np.random.default_rng(20240517)
    raw = rng.uniform(0.05, 1.0, size=(5, 3, 5))
    p = raw / raw.sum(axis=2, keepdims=True)
    qvals = np.round(rng.uniform(0.0, 3.0, size=(5, 3)), 2)
    hvals = np.round(rng.uniform(0.0, 1.5, size=(5, 3)), 2)
    cost = {(s, a): Deterministic(qvals[s, a])
            for s in range(5) for a in range(3)}
    h = {(s, a): Deterministic(hvals[s, a])
         for s in range(5) for a in range(3)}
    model = TabularCmdp(5, 3, p, cost=cost, constraints=[h], alphas=[0.5],
                        u_c=4.0)
    feat = rng.uniform(-1.0, 1.0, size=(5, 3))
    feat /= np.linalg.norm(feat, axis=1, keepdims=True) * 1.25
    features = StateFeatures(feat)
    return Fixture("five_state", model, features)


FIXTURES = {
    "two_state": two_state,
    "three_state": three_state,
    "five_state": five_state,
}


def get_fixture(name: str) -> Fixture:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; "
                       f"choose from {sorted(FIXTURES)}") from None
