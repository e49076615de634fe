"""Finite constrained MDP with per-transition random costs.

A model owns the transition tensor, one running-cost distribution and N
constraint-cost distributions per (s, a, s') on the transition support, and
the constraint thresholds. Models are immutable after construction; learners
interact with them only through `sample_step`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import CostDistribution, Deterministic

__all__ = ["TabularCmdp", "StateFeatures", "InfeasibleActionError", "sample_step"]

PROB_TOL = 1e-12


class InfeasibleActionError(ValueError):
    """Raised when sampling an action outside A(s)."""


def _as_dist_table(n_states, n_actions, transition, feasible, table):
    """Normalize a cost specification to {(s, a, s'): dist} on the support.

    Accepts either a dict keyed by (s, a, s') or (s, a), or a single
    distribution applied everywhere. Missing entries default to zero cost.
    """
    out = {}
    zero = Deterministic(0.0)
    for s in range(n_states):
        for a in feasible[s]:
            for s1 in np.nonzero(transition[s, a] > 0.0)[0]:
                s1 = int(s1)
                if isinstance(table, dict):
                    d = table.get((s, a, s1), table.get((s, a), zero))
                elif table is None:
                    d = zero
                else:
                    d = table
                out[(s, a, s1)] = d
    return out


@dataclass(frozen=True)
class TabularCmdp:
    """Finite CMDP: transitions, cost laws, constraint thresholds.

    transition[s, a, s'] is the probability of moving s -> s' under action a;
    rows of infeasible (s, a) pairs are all-zero. `cost` and `constraints[k]`
    map support triples (s, a, s') to distributions; all samples must lie in
    [0, u_c].
    """

    n_states: int
    n_actions: int
    feasible_actions: tuple[tuple[int, ...], ...]
    transition: np.ndarray
    cost: dict
    constraints: tuple[dict, ...]
    alphas: np.ndarray
    u_c: float
    start_state: int = 0

    def __init__(self, n_states, n_actions, transition, cost=None,
                 constraints=(), alphas=(), u_c=1.0, feasible_actions=None,
                 start_state=0):
        transition = np.array(transition, dtype=float, copy=True)
        if transition.shape != (n_states, n_actions, n_states):
            raise ValueError(f"transition tensor shape {transition.shape} "
                             f"!= ({n_states}, {n_actions}, {n_states})")
        if feasible_actions is None:
            feasible_actions = tuple(
                tuple(int(a) for a in range(n_actions)
                      if transition[s, a].sum() > 0.5)
                for s in range(n_states))
        else:
            feasible_actions = tuple(tuple(int(a) for a in acts)
                                     for acts in feasible_actions)
        for s, acts in enumerate(feasible_actions):
            if not acts:
                raise ValueError(f"state {s} has no feasible actions")
            for a in acts:
                rs = transition[s, a].sum()
                if abs(rs - 1.0) > PROB_TOL:
                    raise ValueError(
                        f"transition row ({s},{a}) sums to {rs!r}, not 1")
                if np.any(transition[s, a] < -PROB_TOL):
                    raise ValueError(f"negative probability in row ({s},{a})")

        alphas = np.atleast_1d(np.array(alphas, dtype=float, copy=True))
        constraints = tuple(constraints)
        if len(constraints) != alphas.size:
            raise ValueError("need one threshold per constraint")
        if np.any(alphas <= 0):
            raise ValueError("constraint thresholds must be positive")

        cost = _as_dist_table(n_states, n_actions, transition,
                              feasible_actions, cost)
        constraints = tuple(
            _as_dist_table(n_states, n_actions, transition,
                           feasible_actions, tb) for tb in constraints)
        for table in (cost, *constraints):
            for key, d in table.items():
                lo, hi = d.support_bounds()
                if lo < -PROB_TOL or hi > u_c + PROB_TOL:
                    raise ValueError(
                        f"cost support [{lo}, {hi}] at {key} outside [0, {u_c}]")

        object.__setattr__(self, "n_states", int(n_states))
        object.__setattr__(self, "n_actions", int(n_actions))
        object.__setattr__(self, "feasible_actions", feasible_actions)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "constraints", constraints)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "u_c", float(u_c))
        object.__setattr__(self, "start_state", int(start_state))
        transition.setflags(write=False)
        alphas.setflags(write=False)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def uniform_action_count(self):
        """Common |A(s)| when all states share one, else None."""
        counts = {len(acts) for acts in self.feasible_actions}
        return counts.pop() if len(counts) == 1 else None

    def mean_cost(self) -> np.ndarray:
        """d(s, a) = E[q | s, a], expectation over next state and cost law."""
        return self._mean_table(self.cost)

    def mean_constraints(self) -> np.ndarray:
        """h_k(s, a) stacked into shape (N, S, A)."""
        if not self.constraints:
            return np.zeros((0, self.n_states, self.n_actions))
        return np.stack([self._mean_table(tb) for tb in self.constraints])

    def _mean_table(self, table):
        out = np.zeros((self.n_states, self.n_actions))
        for (s, a, s1), d in table.items():
            out[s, a] += self.transition[s, a, s1] * d.mean()
        return out

    def compiled(self):
        """Flat-array view used by the samplers; built once, then cached."""
        cm = getattr(self, "_compiled_cache", None)
        if cm is None:
            cm = _compile_model(self)
            object.__setattr__(self, "_compiled_cache", cm)
        return cm


@dataclass(frozen=True)
class StateFeatures:
    """Per-state critic feature vectors, one row per state.

    Row norms are expected to be <= 1; larger norms are permitted here and
    surfaced by the assumption report rather than rejected.
    """

    matrix: np.ndarray
    one_hot: bool = field(default=False, compare=False)

    def __init__(self, matrix, one_hot=None):
        matrix = np.array(matrix, dtype=float, order="C", copy=True)
        if matrix.ndim != 2:
            raise ValueError("feature matrix must be 2-D (states x dim)")
        if one_hot is None:
            n, d = matrix.shape
            one_hot = n == d and np.array_equal(matrix, np.eye(n))
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "one_hot", bool(one_hot))
        matrix.setflags(write=False)

    @classmethod
    def identity(cls, n_states: int) -> "StateFeatures":
        return cls(np.eye(n_states), one_hot=True)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def max_norm(self) -> float:
        return float(np.linalg.norm(self.matrix, axis=1).max())


# --- compiled sampling tables -------------------------------------------------

_KIND_DET = 0
_KIND_DUINT = 1
_KIND_CAT = 2


class _DistTable:
    """Flat arrays describing one cost law per support entry."""

    __slots__ = ("kind", "p0", "p1", "cat_off", "cat_cdf", "cat_val")

    def __init__(self, dists):
        n = len(dists)
        self.kind = np.zeros(n, dtype=np.int8)
        self.p0 = np.zeros(n)
        self.p1 = np.zeros(n)
        self.cat_off = np.zeros(n + 1, dtype=np.int64)
        cdf, val = [], []
        for i, d in enumerate(dists):
            if isinstance(d, Deterministic):
                self.kind[i] = _KIND_DET
                self.p0[i] = d.value
            elif hasattr(d, "lo"):
                self.kind[i] = _KIND_DUINT
                self.p0[i] = d.lo
                self.p1[i] = d.hi
            else:
                self.kind[i] = _KIND_CAT
                cdf.extend(np.cumsum(d.probs))
                val.extend(d.values)
            self.cat_off[i + 1] = len(cdf)
        self.cat_cdf = np.asarray(cdf)
        self.cat_val = np.asarray(val)

    def draw(self, i, rng):
        k = self.kind[i]
        if k == _KIND_DET:
            return self.p0[i]
        if k == _KIND_DUINT:
            return float(rng.integers(int(self.p0[i]), int(self.p1[i]) + 1))
        lo, hi = self.cat_off[i], self.cat_off[i + 1]
        j = int(np.searchsorted(self.cat_cdf[lo:hi], rng.random(), side="right"))
        return self.cat_val[lo + min(j, hi - lo - 1)]


class _CompiledModel:
    """Support lists, transition cdfs and cost tables in flat arrays.

    Entry e = entry_off[s*A + a] + j addresses the j-th support state of
    (s, a); all samplers below share this indexing.
    """

    __slots__ = ("n_states", "n_actions", "feasible_mask", "entry_off",
                 "entry_off_int", "next_state", "next_state_int", "cdf",
                 "q_table", "h_tables", "alphas", "u_c")

    def __init__(self, model: TabularCmdp):
        S, A = model.n_states, model.n_actions
        self.n_states, self.n_actions = S, A
        self.feasible_mask = np.zeros((S, A), dtype=bool)
        self.entry_off = np.zeros(S * A + 1, dtype=np.int64)
        nxt, cdf, keys = [], [], []
        for s in range(S):
            for a in range(A):
                if a in model.feasible_actions[s]:
                    self.feasible_mask[s, a] = True
                    sup = np.nonzero(model.transition[s, a] > 0.0)[0]
                    nxt.extend(int(x) for x in sup)
                    cdf.extend(np.cumsum(model.transition[s, a, sup]))
                    keys.extend((s, a, int(x)) for x in sup)
                self.entry_off[s * A + a + 1] = len(nxt)
        self.next_state = np.asarray(nxt, dtype=np.int64)
        self.next_state_int = nxt                  # plain ints for the hot loop
        self.entry_off_int = [int(x) for x in self.entry_off]
        self.cdf = np.asarray(cdf)
        self.q_table = _DistTable([model.cost[k] for k in keys])
        self.h_tables = tuple(_DistTable([tb[k] for k in keys])
                              for tb in model.constraints)
        self.alphas = model.alphas
        self.u_c = model.u_c

    def draw_transition(self, s, a, rng):
        lo = self.entry_off[s * self.n_actions + a]
        hi = self.entry_off[s * self.n_actions + a + 1]
        j = int(np.searchsorted(self.cdf[lo:hi], rng.random(), side="right"))
        e = lo + min(j, hi - lo - 1)
        return int(self.next_state[e]), e

    def draw_costs(self, e, rng):
        q = self.q_table.draw(e, rng)
        h = np.array([tb.draw(e, rng) for tb in self.h_tables])
        return q, h


def _compile_model(model: TabularCmdp) -> _CompiledModel:
    return _CompiledModel(model)


def sample_step(model: TabularCmdp, s: int, a: int,
                rng: np.random.Generator):
    """Simulate one transition from (s, a).

    Returns (s', q, h) where s' ~ p(s, a, .), q is a draw from the running
    cost law of the realized triple and h holds one draw per constraint.
    Draw order is fixed (transition, then q, then h_1..h_N) so trajectories
    are reproducible from the generator state.
    """
    cm = model.compiled()
    if not (0 <= s < cm.n_states):
        raise ValueError(f"state {s} out of range")
    if not (0 <= a < cm.n_actions) or not cm.feasible_mask[s, a]:
        raise InfeasibleActionError(f"action {a} not feasible in state {s}")
    s1, e = cm.draw_transition(s, a, rng)
    q, h = cm.draw_costs(e, rng)
    return s1, q, h
