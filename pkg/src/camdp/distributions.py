"""Single-stage cost distributions attached to (state, action, next-state) triples.

Every distribution has a closed-form mean so the exact-solution oracles can
compute expected per-step costs without sampling error. Samples are always
nonnegative and bounded; the owning model checks supports against its global
cost bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Deterministic", "DiscreteUniformInt", "Categorical", "CostDistribution"]


@dataclass(frozen=True)
class Deterministic:
    """Point mass at `value`. Consumes no randomness when sampled."""

    value: float

    def mean(self) -> float:
        return float(self.value)

    def support_bounds(self) -> tuple[float, float]:
        return float(self.value), float(self.value)

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.value)


@dataclass(frozen=True)
class DiscreteUniformInt:
    """Uniform over the integers {lo, lo+1, ..., hi} (both ends inclusive)."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValueError(f"empty integer range [{self.lo}, {self.hi}]")

    def mean(self) -> float:
        return (self.lo + self.hi) / 2.0

    def support_bounds(self) -> tuple[float, float]:
        return float(self.lo), float(self.hi)

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.integers(self.lo, self.hi + 1))


@dataclass(frozen=True)
class Categorical:
    """Finite distribution over arbitrary real values with given probabilities."""

    values: tuple[float, ...]
    probs: tuple[float, ...]
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __init__(self, values, probs):
        values = tuple(float(v) for v in values)
        probs = tuple(float(p) for p in probs)
        if len(values) != len(probs) or not values:
            raise ValueError("values and probs must be nonempty and equal length")
        if any(p < 0 for p in probs):
            raise ValueError("negative probability")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {sum(probs)}, not 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cdf", np.cumsum(np.asarray(probs)))

    def mean(self) -> float:
        return float(sum(v * p for v, p in zip(self.values, self.probs)))

    def support_bounds(self) -> tuple[float, float]:
        return min(self.values), max(self.values)

    def sample(self, rng: np.random.Generator) -> float:
        i = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        return self.values[min(i, len(self.values) - 1)]


CostDistribution = Deterministic | DiscreteUniformInt | Categorical
