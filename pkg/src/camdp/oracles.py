"""Exact solvers for small models: stationary laws, differential values,
policy gradients and the critic's linear fixed point.

Everything here is dense linear algebra and is intended for verification at
|S| <= 2500; learners never call into this module. The differential value is
pinned by the stationary-mean-zero convention so derived quantities are
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components
from scipy.sparse import csr_matrix

from .model import StateFeatures, TabularCmdp
from .policy import SoftmaxPolicy

__all__ = [
    "ErgodicityError", "transition_matrix", "chain_stationary",
    "power_iteration_stationary", "stationary_distribution",
    "exact_lagrangian", "differential_values", "exact_policy_gradient",
    "TdFixedPoint", "td_fixed_point", "approximation_error",
    "tv_decay_fit", "ExactSolution", "exact_solution",
    "AssumptionReport", "assumption_report",
]

RESIDUAL_TOL = 1e-9


class ErgodicityError(RuntimeError):
    """The induced chain is not irreducible, or the solver failed to settle."""


def transition_matrix(model: TabularCmdp, policy: SoftmaxPolicy) -> np.ndarray:
    """State-to-state matrix P[s, s'] = sum_a pi(a|s) p(s, a, s')."""
    S = model.n_states
    P = np.zeros((S, S))
    for s in range(S):
        probs = policy.action_probs(s)
        for i, a in enumerate(model.feasible_actions[s]):
            P[s] += probs[i] * model.transition[s, a]
    return P


def _check_irreducible(P: np.ndarray) -> None:
    graph = csr_matrix(P > 0.0)
    n_comp, _ = connected_components(graph, directed=True, connection="strong")
    if n_comp != 1:
        raise ErgodicityError(
            f"induced chain splits into {n_comp} strongly connected components")


def chain_stationary(P: np.ndarray, check: bool = True) -> np.ndarray:
    """Stationary row vector of P via a dense solve.

    Replaces one equation of (P^T - I) mu = 0 with the normalization
    sum(mu) = 1; falls back to power iteration if the solve is degenerate.
    """
    if check:
        _check_irreducible(P)
    S = P.shape[0]
    M = P.T - np.eye(S)
    M[-1, :] = 1.0
    rhs = np.zeros(S)
    rhs[-1] = 1.0
    try:
        mu = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        mu = None
    if mu is None or np.any(mu < -1e-10) \
            or np.abs(mu @ P - mu).max() > RESIDUAL_TOL:
        mu = power_iteration_stationary(P)
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def power_iteration_stationary(P: np.ndarray, tol: float = 1e-13,
                               max_iters: int = 200_000) -> np.ndarray:
    """Independent stationary solver: iterate mu <- mu P to a fixed point."""
    S = P.shape[0]
    mu = np.full(S, 1.0 / S)
    for _ in range(max_iters):
        nxt = mu @ P
        nxt /= nxt.sum()
        if np.abs(nxt - mu).max() < tol:
            return nxt
        mu = nxt
    raise ErgodicityError(
        f"power iteration did not settle within {max_iters} iterations")


def stationary_distribution(model: TabularCmdp,
                            policy: SoftmaxPolicy) -> np.ndarray:
    return chain_stationary(transition_matrix(model, policy))


def _penalized_cost(model: TabularCmdp, gamma) -> np.ndarray:
    """c(s, a) = d(s, a) + sum_k gamma_k (h_k(s, a) - alpha_k) on feasible pairs."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    if gamma.shape != model.alphas.shape:
        raise ValueError("one multiplier per constraint expected")
    c = model.mean_cost().copy()
    h = model.mean_constraints()
    for k in range(model.n_constraints):
        c += gamma[k] * (h[k] - model.alphas[k])
    return c


def _policy_matrix(model, policy):
    """pi[s, a] over global action ids (zero for infeasible pairs)."""
    pi = np.zeros((model.n_states, model.n_actions))
    for s in range(model.n_states):
        probs = policy.action_probs(s)
        for i, a in enumerate(model.feasible_actions[s]):
            pi[s, a] = probs[i]
    return pi


def exact_lagrangian(model: TabularCmdp, policy: SoftmaxPolicy, gamma):
    """Penalized average cost together with its pieces.

    Returns (L, J, G) with J the long-run average running cost, G the vector
    of long-run average constraint costs and
    L = J + sum_k gamma_k (G_k - alpha_k).
    """
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    mu = stationary_distribution(model, policy)
    pi = _policy_matrix(model, policy)
    occ = mu[:, None] * pi
    J = float((occ * model.mean_cost()).sum())
    h = model.mean_constraints()
    G = np.array([(occ * h[k]).sum() for k in range(model.n_constraints)])
    L = J + float(gamma @ (G - model.alphas))
    return L, J, G


def differential_values(model: TabularCmdp, policy: SoftmaxPolicy, gamma):
    """Differential state and state-action values of the penalized cost.

    V solves V = c_bar - L 1 + P V with stationary mean zero; the
    state-action value is M(s, a) = c(s, a) - L + sum_s' p(s, a, s') V(s').
    """
    P = transition_matrix(model, policy)
    mu = chain_stationary(P)
    c = _penalized_cost(model, gamma)
    pi = _policy_matrix(model, policy)
    cbar = (pi * c).sum(axis=1)
    L = float(mu @ cbar)
    S = model.n_states
    # (I - P + 1 mu^T) V = cbar - L 1 has a unique solution with mu^T V = 0
    A = np.eye(S) - P + np.outer(np.ones(S), mu)
    try:
        V = np.linalg.solve(A, cbar - L)
    except np.linalg.LinAlgError as exc:
        raise ErgodicityError("singular Poisson system") from exc
    resid = np.abs(V - (cbar - L) - P @ V).max()
    if resid > 1e-8:
        raise ErgodicityError(f"Poisson residual {resid:.2e}")
    M = np.zeros((S, model.n_actions))
    for s in range(S):
        for a in model.feasible_actions[s]:
            M[s, a] = c[s, a] - L + model.transition[s, a] @ V
    return V, M


def exact_policy_gradient(model: TabularCmdp, policy: SoftmaxPolicy,
                          gamma) -> np.ndarray:
    """Gradient of the penalized average cost in the policy parameters.

    grad = sum_s mu(s) sum_a grad pi(a|s) adv(s, a), with the advantage
    adv = M - V of the penalized cost.
    """
    mu = stationary_distribution(model, policy)
    V, M = differential_values(model, policy, gamma)
    grad = np.zeros(policy.dim)
    for s in range(model.n_states):
        probs = policy.action_probs(s)
        for i, a in enumerate(model.feasible_actions[s]):
            adv = M[s, a] - V[s]
            grad += mu[s] * probs[i] * adv * policy.log_policy_gradient(s, i)
    return grad


@dataclass(frozen=True)
class TdFixedPoint:
    """Critic fixed point bundle for one (policy, multipliers, features)."""

    v_star: np.ndarray
    a_matrix: np.ndarray
    b_vector: np.ndarray
    residual: float            # ||A v* + b||_inf
    sym_max_eig: float         # max eigenvalue of (A + A^T)/2
    negative_definite: bool


def td_fixed_point(model: TabularCmdp, policy: SoftmaxPolicy, gamma,
                   features: StateFeatures) -> TdFixedPoint:
    """Solve A v + b = 0 for the linear critic under the stationary law.

    A = E[f_s (f_s' - f_s)^T], b = E[(c(s, a) - L) f_s]. When A is negative
    definite the solution is unique. Indicator features make A singular
    (constant vectors are in the feature span); the system is then still
    consistent and we return the solution whose feature value has stationary
    mean zero, matching the differential-value convention.
    """
    P = transition_matrix(model, policy)
    mu = chain_stationary(P)
    F = features.matrix
    if F.shape[0] != model.n_states:
        raise ValueError("one feature row per state required")
    D = mu[:, None]
    A = F.T @ (D * (P @ F - F))
    c = _penalized_cost(model, gamma)
    pi = _policy_matrix(model, policy)
    cbar = (pi * c).sum(axis=1)
    L = float(mu @ cbar)
    b = F.T @ (mu * (cbar - L))

    sym = 0.5 * (A + A.T)
    eigs = np.linalg.eigvalsh(sym)
    sym_max = float(eigs[-1])
    definite = sym_max < -1e-12

    if definite:
        v = np.linalg.solve(A, -b)
    else:
        v, *_ = np.linalg.lstsq(A, -b, rcond=None)
        # align the free additive constant with the mu-mean-zero convention
        null = scipy.linalg.null_space(A)
        if null.size:
            w = mu @ (F @ null)
            coef, *_ = np.linalg.lstsq(w.reshape(1, -1),
                                       np.atleast_1d(-mu @ (F @ v)),
                                       rcond=None)
            v = v + null @ coef
    residual = float(np.abs(A @ v + b).max())
    return TdFixedPoint(v, A, b, residual, sym_max, definite)


def approximation_error(model, policy, gamma, features,
                        fixed_point: TdFixedPoint | None = None) -> float:
    """Stationary-weighted RMS gap between the linear critic and the true
    differential value, with both recentered to stationary mean zero."""
    mu = stationary_distribution(model, policy)
    V, _ = differential_values(model, policy, gamma)
    if fixed_point is None:
        fixed_point = td_fixed_point(model, policy, gamma, features)
    approx = features.matrix @ fixed_point.v_star
    approx = approx - mu @ approx
    return float(np.sqrt(mu @ (approx - V) ** 2))


def tv_decay_fit(P: np.ndarray, mu: np.ndarray, max_powers: int = 200):
    """Fit total-variation decay max_x tv(P^t(x, .), mu) <= b k^t.

    Least squares in log space over the powers where the distance is above
    the numerical floor. Returns (b, k, distances).
    """
    dists = []
    M = np.eye(P.shape[0])
    for _ in range(max_powers):
        M = M @ P
        d = 0.5 * np.abs(M - mu).sum(axis=1).max()
        dists.append(d)
        if d < 1e-13:
            break
    dists = np.asarray(dists)
    ts = np.arange(1, dists.size + 1, dtype=float)
    keep = dists > 1e-13
    if keep.sum() < 2:
        return 1.0, 0.0, dists
    coef = np.polyfit(ts[keep], np.log(dists[keep]), 1)
    k = float(np.exp(coef[0]))
    b = float(np.exp(coef[1]))
    return b, k, dists


@dataclass(frozen=True)
class ExactSolution:
    """Everything the oracles know about one (theta, gamma) pair."""

    mu: np.ndarray
    lagrangian: float
    avg_cost: float
    avg_constraints: np.ndarray
    diff_value: np.ndarray
    diff_action_value: np.ndarray
    grad: np.ndarray
    td: TdFixedPoint
    eps_app: float


def exact_solution(model: TabularCmdp, policy: SoftmaxPolicy, gamma,
                   features: StateFeatures) -> ExactSolution:
    mu = stationary_distribution(model, policy)
    L, J, G = exact_lagrangian(model, policy, gamma)
    V, M = differential_values(model, policy, gamma)
    grad = exact_policy_gradient(model, policy, gamma)
    td = td_fixed_point(model, policy, gamma, features)
    eps = approximation_error(model, policy, gamma, features, td)
    return ExactSolution(mu, L, J, G, V, M, grad, td, eps)


@dataclass(frozen=True)
class AssumptionReport:
    """Numerical findings for the standing assumptions; never raises."""

    max_feature_norm: float
    feature_norms_ok: bool          # every ||f_s|| <= 1
    lambda_e: float                 # -max eigenvalue of (A + A^T)/2
    critic_matrix_definite: bool
    ergodic: bool
    ergodicity_detail: str
    tv_b: float
    tv_k: float
    eps_app: float
    score_bound: float

    @property
    def flags(self) -> list[str]:
        out = []
        if not self.feature_norms_ok:
            out.append(f"feature norm {self.max_feature_norm:.6g} exceeds 1")
        if not self.critic_matrix_definite:
            out.append("critic matrix not negative definite "
                       f"(max symmetric eigenvalue {-self.lambda_e:.3e})")
        if not self.ergodic:
            out.append(f"ergodicity: {self.ergodicity_detail}")
        return out


def assumption_report(model: TabularCmdp, policy: SoftmaxPolicy, gamma,
                      features: StateFeatures) -> AssumptionReport:
    max_norm = features.max_norm()
    norms_ok = max_norm <= 1.0 + 1e-12
    try:
        P = transition_matrix(model, policy)
        mu = chain_stationary(P)
        ergodic, detail = True, ""
    except ErgodicityError as exc:
        return AssumptionReport(max_norm, norms_ok, 0.0, False, False,
                                str(exc), 0.0, 1.0, float("nan"),
                                policy.score_bound())
    td = td_fixed_point(model, policy, gamma, features)
    b, k, _ = tv_decay_fit(P, mu)
    eps = approximation_error(model, policy, gamma, features, td)
    return AssumptionReport(max_norm, norms_ok, -td.sym_max_eig,
                            td.negative_definite, ergodic, detail,
                            b, k, eps, policy.score_bound())
