"""Cross-checks between the exact oracles and their independent solvers.

Bundles the model sanity checks, the stationary-law and gradient dual
routes, the critic fixed-point residual and the standing-assumption
findings into one pass/fail report. Used by the CLI `verify` subcommand
and by the acceptance tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import oracles
from ..fixtures import get_fixture
from ..model import StateFeatures, TabularCmdp
from ..model_io import load_model_file
from ..policy import SoftmaxPolicy

__all__ = ["VerifyReport", "CheckResult", "verify_suite", "fd_gradient"]

GRAD_TOL = 1e-5
RESIDUAL_TOL = 1e-9
STATE_LIMIT = 2500


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class VerifyReport:
    checks: list[CheckResult] = field(default_factory=list)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(CheckResult(name, bool(passed), detail))

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def render(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            detail = f"  ({c.detail})" if c.detail else ""
            lines.append(f"[{status}] {c.name}{detail}")
        lines.append(f"verify: {'all checks passed' if self.ok else 'FAILURES'}")
        return "\n".join(lines)


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences, the independent route for gradients."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def _random_thetas(dim: int, count: int = 2, scale: float = 0.5):
    rng = np.random.default_rng(7)
    return [np.zeros(dim)] + [rng.normal(scale=scale, size=dim)
                              for _ in range(count)]


def verify_suite(target, features: StateFeatures | None = None,
                 temperature: float = 1.0) -> VerifyReport:
    """Run every oracle cross-check on a fixture name, model file or model."""
    if isinstance(target, TabularCmdp):
        model = target
    elif isinstance(target, str) and target.endswith((".cmdp", ".txt")):
        model = load_model_file(target)
    elif isinstance(target, str):
        fx = get_fixture(target)
        model = fx.model
        if features is None:
            features = fx.features
    else:
        raise TypeError(f"cannot verify {target!r}")
    if features is None:
        features = StateFeatures.identity(model.n_states)
    report = VerifyReport()
    if model.n_states > STATE_LIMIT:
        report.add("model size", False,
                   f"{model.n_states} states exceeds the oracle limit")
        return report

    # model sanity
    sums_ok = True
    for s in range(model.n_states):
        for a in model.feasible_actions[s]:
            if abs(model.transition[s, a].sum() - 1.0) > 1e-12:
                sums_ok = False
    report.add("transition rows sum to one", sums_ok)
    bounds_ok = all(
        d.support_bounds()[0] >= 0 and d.support_bounds()[1] <= model.u_c
        for table in (model.cost, *model.constraints)
        for d in table.values())
    report.add("cost supports inside [0, u_c]", bounds_ok)

    policy = SoftmaxPolicy.for_model(model, temperature=temperature)
    gamma0 = np.full(model.n_constraints, 0.25)

    # ergodicity and the stationary dual route
    try:
        P = oracles.transition_matrix(model, policy)
        mu = oracles.chain_stationary(P)
        mu_power = oracles.power_iteration_stationary(P)
        gap = float(np.abs(mu - mu_power).max())
        report.add("stationary solvers agree", gap <= 1e-9, f"gap {gap:.2e}")
        report.add("ergodic under the uniform policy", True)
    except oracles.ErgodicityError as exc:
        report.add("ergodic under the uniform policy", False, str(exc))
        return report

    # policy identities
    worst_norm, worst_score = 0.0, 0.0
    for s in range(model.n_states):
        probs = policy.action_probs(s)
        worst_norm = max(worst_norm, abs(float(probs.sum()) - 1.0))
        acc = np.zeros(policy.dim)
        for i in range(probs.size):
            acc += probs[i] * policy.log_policy_gradient(s, i)
        worst_score = max(worst_score, float(np.abs(acc).max()))
    report.add("action probabilities normalized", worst_norm <= 1e-12,
               f"worst {worst_norm:.2e}")
    report.add("score has zero mean under the policy", worst_score <= 1e-10,
               f"worst {worst_score:.2e}")

    # gradient dual route at several parameter points
    worst_rel = 0.0
    for theta in _random_thetas(policy.dim):
        pol = policy.with_theta(theta)
        grad = oracles.exact_policy_gradient(model, pol, gamma0)

        def lag_of(th):
            return oracles.exact_lagrangian(model, policy.with_theta(th),
                                            gamma0)[0]

        fd = fd_gradient(lag_of, theta)
        denom = max(float(np.linalg.norm(fd)), 1e-12)
        worst_rel = max(worst_rel,
                        float(np.linalg.norm(grad - fd)) / denom)
    report.add("policy gradient matches finite differences",
               worst_rel <= GRAD_TOL, f"worst relative error {worst_rel:.2e}")

    # critic fixed point and advantage identity
    td = oracles.td_fixed_point(model, policy, gamma0, features)
    report.add("critic fixed-point residual", td.residual <= RESIDUAL_TOL,
               f"residual {td.residual:.2e}")
    V, M = oracles.differential_values(model, policy, gamma0)
    pi_mat = np.zeros((model.n_states, model.n_actions))
    for s in range(model.n_states):
        probs = policy.action_probs(s)
        for i, a in enumerate(model.feasible_actions[s]):
            pi_mat[s, a] = probs[i]
    adv_mean = float((mu[:, None] * pi_mat * (M - V[:, None])).sum())
    report.add("advantage has zero stationary mean", abs(adv_mean) <= 1e-10,
               f"mean {adv_mean:.2e}")

    # standing assumptions
    rep = oracles.assumption_report(model, policy, gamma0, features)
    report.add("feature norms bounded by one", rep.feature_norms_ok,
               f"max norm {rep.max_feature_norm:.6g}")
    report.add("critic matrix negative semidefinite", rep.lambda_e >= -1e-10,
               f"lambda_e {rep.lambda_e:.3e}")
    report.add("geometric ergodicity fit", 0.0 < rep.tv_k < 1.0,
               f"b {rep.tv_b:.3g}, k {rep.tv_k:.3g}")
    detail = f"eps_app {rep.eps_app:.2e}"
    if features.one_hot:
        report.add("indicator features represent the value exactly",
                   rep.eps_app <= 1e-9, detail)
    else:
        report.add("approximation error finite", np.isfinite(rep.eps_app),
                   detail)
    return report
