"""Three-timescale update engines.

Both learners advance one sampled transition per iteration and update, in
order: the penalized average-cost tracker, the TD error, the projected
critic, the actor, the per-constraint cost trackers and the clamped
multipliers. Every right-hand side reads pre-step values. The natural
variant preconditions the actor step with the inverse of a running score
outer-product matrix and appends that matrix's recursion after the
multiplier update.

Step sizes are power laws a(t) = c_a (1+t)^-omega, b(t) = c_b (1+t)^-sigma,
c(t) = c_c (1+t)^-beta with 0 < omega < sigma < beta <= 1, so the critic
equilibrates fastest and the multipliers slowest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import StateFeatures, TabularCmdp
from .policy import SoftmaxPolicy

__all__ = [
    "StepSchedule", "ProjectionSpec", "FisherState", "DenseFisher",
    "LearnerState", "ScheduleError", "NumericalError", "FisherError",
    "step_sizes", "project_critic", "project_multiplier", "td_error",
    "fisher_update", "mixing_time", "initial_state", "cac_step", "cnac_step",
    "LearnerEngine", "RunResult",
]


class ScheduleError(ValueError):
    pass


class NumericalError(RuntimeError):
    """A learner update produced a non-finite value."""


class FisherError(RuntimeError):
    """The score matrix lost positive definiteness."""


@dataclass(frozen=True)
class StepSchedule:
    """Power-law step sizes for the three timescales."""

    c_a: float = 1.0
    omega: float = 0.4
    c_b: float = 1.0
    sigma: float = 0.6
    c_c: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if min(self.c_a, self.c_b, self.c_c) <= 0:
            raise ScheduleError("step-size coefficients must be positive")
        if not (0.0 < self.omega < self.sigma < self.beta <= 1.0):
            raise ScheduleError(
                f"exponents must satisfy 0 < omega < sigma < beta <= 1, got "
                f"({self.omega}, {self.sigma}, {self.beta})")

    def at(self, t: int) -> tuple[float, float, float]:
        base = 1.0 + t
        return (self.c_a * base ** -self.omega,
                self.c_b * base ** -self.sigma,
                self.c_c * base ** -self.beta)


def step_sizes(schedule: StepSchedule, t: int) -> tuple[float, float, float]:
    if t < 0:
        raise ValueError("t must be nonnegative")
    return schedule.at(t)


@dataclass(frozen=True)
class ProjectionSpec:
    """Projection sets: critic ball radius and multiplier cap."""

    critic_radius: float = 100.0
    multiplier_cap: float = 100.0

    def __post_init__(self):
        if not (self.critic_radius > 0 and math.isfinite(self.critic_radius)):
            raise ValueError("critic radius must be positive and finite")
        if not (self.multiplier_cap > 0 and math.isfinite(self.multiplier_cap)):
            raise ValueError("multiplier cap must be positive and finite")


def project_critic(v: np.ndarray, spec: ProjectionSpec) -> np.ndarray:
    """Radial projection onto the origin-centered ball of the critic radius."""
    v = np.asarray(v, dtype=float)
    n2 = float(v @ v)
    r = spec.critic_radius
    if n2 > r * r:
        return v * (r / math.sqrt(n2))
    return v.copy()


def project_multiplier(y: float, spec: ProjectionSpec) -> float:
    """Clamp a multiplier to [0, cap]."""
    return max(0.0, min(float(y), spec.multiplier_cap))


def td_error(q, h, gamma, alpha, avg_cost_est, v, f_s, f_s1) -> float:
    """One-step temporal-difference error of the penalized cost.

    delta = q + sum_k gamma_k (h_k - alpha_k) - L + v.(f_s' - f_s)
    """
    h = np.atleast_1d(np.asarray(h, dtype=float))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    pc = float(q)
    for k in range(gamma.size):
        pc += gamma[k] * (h[k] - alpha[k])
    f_s = np.asarray(f_s, dtype=float)
    f_s1 = np.asarray(f_s1, dtype=float)
    return pc - float(avg_cost_est) + float(np.asarray(v, dtype=float)
                                            @ (f_s1 - f_s))


# --- score-matrix state --------------------------------------------------------


@dataclass
class FisherState:
    """Block-diagonal score matrix for tabular policies.

    Scores of a tabular softmax live inside their state's action block, so
    the recursion (1-a) G + a (psi psi^T + ridge I) preserves block-diagonal
    structure exactly. `flat` concatenates the per-state blocks row-major;
    `offsets[s]` indexes the start of block s.

    The ridge term keeps the matrix invertible: scores sum to zero inside
    each block, so without it the recursion starves the per-block constant
    directions and the matrix degenerates numerically. The actor solves
    against the current visited block directly; refreshes recompute every
    block inverse to record conditioning diagnostics.
    """

    flat: np.ndarray
    offsets: np.ndarray
    sizes: np.ndarray
    diag_idx: np.ndarray
    ridge: float
    refresh_every: int
    since_refresh: int = 0
    refresh_residual: float = 0.0
    eig_min: float = 1.0
    eig_max: float = 1.0
    refresh_log: list = field(default_factory=list)

    @classmethod
    def initial(cls, action_counts, p: float = 1.0, ridge: float = 1e-3,
                refresh_every: int = 1000) -> "FisherState":
        if p <= 0:
            raise ValueError("initial scale p must be positive")
        if ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")
        sizes = np.asarray(list(action_counts), dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes ** 2)]).astype(np.int64)
        flat = np.zeros(int(offsets[-1]))
        diag = []
        for s, n in enumerate(sizes):
            base = offsets[s]
            for i in range(n):
                j = base + i * n + i
                flat[j] = p
                diag.append(j)
        return cls(flat=flat, offsets=offsets, sizes=sizes,
                   diag_idx=np.asarray(diag, dtype=np.int64), ridge=ridge,
                   refresh_every=refresh_every,
                   eig_min=float(p), eig_max=float(p))

    def block(self, s: int) -> np.ndarray:
        n = int(self.sizes[s])
        lo = int(self.offsets[s])
        return self.flat[lo:lo + n * n].reshape(n, n)

    def matrix(self) -> np.ndarray:
        """Dense assembly; intended for inspection on small models."""
        d = int(self.sizes.sum())
        out = np.zeros((d, d))
        pos = 0
        for s in range(self.sizes.size):
            n = int(self.sizes[s])
            out[pos:pos + n, pos:pos + n] = self.block(s)
            pos += n
        return out

    def inverse(self) -> np.ndarray:
        """Dense inverse assembled block by block."""
        d = int(self.sizes.sum())
        out = np.zeros((d, d))
        pos = 0
        for s in range(self.sizes.size):
            n = int(self.sizes[s])
            out[pos:pos + n, pos:pos + n] = np.linalg.inv(self.block(s))
            pos += n
        return out

    def copy(self) -> "FisherState":
        return FisherState(flat=self.flat.copy(), offsets=self.offsets,
                           sizes=self.sizes, diag_idx=self.diag_idx,
                           ridge=self.ridge, refresh_every=self.refresh_every,
                           since_refresh=self.since_refresh,
                           refresh_residual=self.refresh_residual,
                           eig_min=self.eig_min, eig_max=self.eig_max,
                           refresh_log=list(self.refresh_log))

    def uniform_size(self):
        n = int(self.sizes[0])
        return n if np.all(self.sizes == n) else None

    def refresh(self, t: int) -> None:
        """Recompute block inverses, record conditioning, verify PD."""
        n = self.uniform_size()
        if n is not None:
            blocks = self.flat.reshape(-1, n, n)
            inv = np.linalg.inv(blocks)
            resid = float(np.abs(blocks @ inv - np.eye(n)).max())
            eigs = np.linalg.eigvalsh(blocks)
            emin, emax = float(eigs.min()), float(eigs.max())
        else:
            resid, emin, emax = 0.0, math.inf, -math.inf
            for s in range(self.sizes.size):
                b = self.block(s)
                inv = np.linalg.inv(b)
                resid = max(resid, float(np.abs(b @ inv - np.eye(b.shape[0])).max()))
                eigs = np.linalg.eigvalsh(b)
                emin, emax = min(emin, float(eigs.min())), max(emax, float(eigs.max()))
        if emin <= 0.0 or not math.isfinite(resid):
            raise FisherError(
                f"score matrix lost positive definiteness at t={t}: "
                f"min eigenvalue {emin:.3e}")
        self.refresh_residual = resid
        self.eig_min, self.eig_max = emin, emax
        self.since_refresh = 0
        self.refresh_log.append((t, resid, emin, emax))


@dataclass
class DenseFisher:
    """Dense (matrix, inverse, counter) triple for the standalone update op."""

    g: np.ndarray
    g_inv: np.ndarray
    count: int = 0


def fisher_update(fisher: DenseFisher, a_t: float, psi: np.ndarray,
                  refresh_every: int = 1000, ridge: float = 0.0) -> DenseFisher:
    """One step of the score-matrix recursion with incremental inverse.

    g' = (1 - a) g + a (psi psi^T + ridge I). The inverse is advanced with
    the rank-one inverse-update identity applied to (1 - a) g + a psi psi^T
    (exact when ridge = 0) and re-solved from scratch every `refresh_every`
    steps to cap drift.
    """
    if not 0.0 < a_t < 1.0:
        raise ScheduleError(f"score-matrix step size must be in (0, 1), got {a_t}")
    psi = np.asarray(psi, dtype=float)
    g = (1.0 - a_t) * fisher.g + a_t * np.outer(psi, psi)
    if ridge:
        g = g + (a_t * ridge) * np.eye(g.shape[0])
    count = fisher.count + 1
    if count % refresh_every == 0:
        g_inv = np.linalg.inv(g)
        eigs = np.linalg.eigvalsh(g)
        if eigs.min() <= 0.0:
            raise FisherError(
                f"score matrix lost positive definiteness "
                f"(min eigenvalue {eigs.min():.3e})")
    else:
        base_inv = fisher.g_inv / (1.0 - a_t)
        u = base_inv @ psi
        g_inv = base_inv - np.outer(u, u) * (a_t / (1.0 + a_t * (psi @ u)))
    return DenseFisher(g=g, g_inv=g_inv, count=count)


def mixing_time(b_erg: float, k_erg: float, schedule: StepSchedule,
                t: int) -> int:
    """Smallest lag m >= 0 with b k^(m-1) <= min(a(t), b(t), c(t))."""
    if b_erg <= 0 or not 0.0 < k_erg < 1.0:
        raise ValueError("need b > 0 and k in (0, 1)")
    eps = min(schedule.at(t))

    def ok(m):
        return b_erg * k_erg ** (m - 1) <= eps

    guess = 1.0 + math.log(eps / b_erg) / math.log(k_erg)
    m = max(0, math.ceil(guess - 1e-12))
    while m > 0 and ok(m - 1):
        m -= 1
    while not ok(m):
        m += 1
    return m


# --- learner state and engine --------------------------------------------------


@dataclass
class LearnerState:
    """Mutable-by-replacement learner snapshot at iteration t."""

    theta: np.ndarray
    v: np.ndarray
    avg_cost_est: float            # penalized running average
    raw_cost_est: float            # running average of the raw running cost
    constraint_ests: np.ndarray
    multipliers: np.ndarray
    t: int
    s_current: int
    fisher: FisherState | None = None

    def copy(self) -> "LearnerState":
        return LearnerState(
            theta=self.theta.copy(), v=self.v.copy(),
            avg_cost_est=self.avg_cost_est, raw_cost_est=self.raw_cost_est,
            constraint_ests=self.constraint_ests.copy(),
            multipliers=self.multipliers.copy(), t=self.t,
            s_current=self.s_current,
            fisher=self.fisher.copy() if self.fisher else None)


def initial_state(model: TabularCmdp, policy: SoftmaxPolicy,
                  features: StateFeatures, *, algorithm: str = "cac",
                  fisher_p: float = 1.0, fisher_ridge: float = 1e-3,
                  fisher_refresh_every: int = 1000,
                  start_state: int | None = None) -> LearnerState:
    """Zero-initialized state; the natural variant also gets G(0) = p I."""
    fisher = None
    if algorithm == "cnac":
        fisher = FisherState.initial(
            [len(a) for a in model.feasible_actions], p=fisher_p,
            ridge=fisher_ridge, refresh_every=fisher_refresh_every)
    elif algorithm != "cac":
        raise ValueError(f"unknown algorithm {algorithm!r}")
    s0 = model.start_state if start_state is None else int(start_state)
    return LearnerState(
        theta=np.zeros(policy.dim), v=np.zeros(features.dim),
        avg_cost_est=0.0, raw_cost_est=0.0,
        constraint_ests=np.zeros(model.n_constraints),
        multipliers=np.zeros(model.n_constraints),
        t=0, s_current=s0, fisher=fisher)


@dataclass
class RunResult:
    final: LearnerState
    snapshots: dict
    window_avg_cost: float
    window_avg_constraints: np.ndarray
    window_steps: int
    fisher_log: list
    critic_err_sq: np.ndarray | None = None


class LearnerEngine:
    """Compiled stepping loop for one (model, policy, features, config).

    Only tabular policies are supported for stepping; the trajectory of
    `step` calls is bit-identical to a single `run`, both driving the same
    update kernel.
    """

    def __init__(self, model: TabularCmdp, policy: SoftmaxPolicy,
                 features: StateFeatures, schedule: StepSchedule,
                 projections: ProjectionSpec, *, algorithm: str = "cac",
                 freeze_actor: bool = False, freeze_multipliers: bool = False):
        if not policy.is_tabular:
            raise NotImplementedError(
                "stepping requires the tabular policy parameterization")
        if algorithm not in ("cac", "cnac"):
            raise ValueError(f"unknown algorithm {algorithm!r}")
        if features.matrix.shape[0] != model.n_states:
            raise ValueError("feature rows must match the state count")
        self.model = model
        self.policy = policy
        self.features = features
        self.schedule = schedule
        self.projections = projections
        self.algorithm = algorithm
        self.freeze_actor = freeze_actor
        self.freeze_multipliers = freeze_multipliers
        self.compiled = model.compiled()
        # plain-int lookup tables keep the hot loop free of array indexing
        self.act_ids = [list(acts) for acts in model.feasible_actions]
        self.offsets = [int(x) for x in policy.offsets]
        self.block_len = [len(acts) for acts in model.feasible_actions]
        self.temperature = policy.temperature
        self.alphas = [float(a) for a in model.alphas]
        self.n_cons = model.n_constraints

    # -- single kernel step, mutating the buffer dict ---------------------------

    def _advance(self, st: LearnerState, rng: np.random.Generator) -> None:
        sched = self.schedule
        t = st.t
        base = 1.0 + t
        a_t = sched.c_a * base ** -sched.omega
        b_t = sched.c_b * base ** -sched.sigma
        c_t = sched.c_c * base ** -sched.beta

        s = st.s_current
        theta, v = st.theta, st.v
        gam, U = st.multipliers, st.constraint_ests
        alphas = self.alphas
        cm = self.compiled
        lo = self.offsets[s]
        na = self.block_len[s]

        # action draw (same arithmetic as SoftmaxPolicy.action_probs)
        z = theta[lo:lo + na]
        if self.temperature != 1.0:
            z = z / self.temperature
        e = np.exp(z - z.max())
        tot = e.sum()
        i = int(e.cumsum().searchsorted(rng.random() * tot, "right"))
        if i >= na:
            i = na - 1
        a = self.act_ids[s][i]

        # transition and cost draws, inlined from the compiled tables
        row = s * cm.n_actions + a
        elo = cm.entry_off_int[row]
        ehi = cm.entry_off_int[row + 1]
        j = int(cm.cdf[elo:ehi].searchsorted(rng.random(), "right"))
        entry = elo + min(j, ehi - elo - 1)
        s1 = cm.next_state_int[entry]
        qt = cm.q_table
        q = qt.p0[entry] if qt.kind[entry] == 0 else qt.draw(entry, rng)

        pc = q
        hs = []
        for k in range(self.n_cons):
            ht = cm.h_tables[k]
            h_k = ht.p0[entry] if ht.kind[entry] == 0 else ht.draw(entry, rng)
            hs.append(h_k)
            pc += gam[k] * (h_k - alphas[k])

        L = st.avg_cost_est
        L_new = L + a_t * (pc - L)
        raw_new = st.raw_cost_est + a_t * (q - st.raw_cost_est)

        F = self.features
        if F.one_hot:
            delta = pc - L + (v[s1] - v[s])
        else:
            delta = pc - L + float(v @ (F.matrix[s1] - F.matrix[s]))
        if not math.isfinite(delta):
            raise NumericalError(
                f"non-finite TD error at iteration {t} (state {s}, action {a})")

        # critic with radial projection
        if F.one_hot:
            v[s] += a_t * delta
        else:
            v += (a_t * delta) * F.matrix[s]
        r = self.projections.critic_radius
        n2 = float(v @ v)
        if n2 > r * r:
            v *= r / math.sqrt(n2)

        # actor along the score (optionally preconditioned)
        probs = e / tot
        psi_b = -probs
        psi_b[i] += 1.0
        if self.temperature != 1.0:
            psi_b /= self.temperature
        if self.algorithm == "cnac":
            fisher = st.fisher
            if not self.freeze_actor:
                kb = np.linalg.inv(fisher.block(s))
                theta[lo:lo + na] += (b_t * delta) * (kb @ psi_b)
        elif not self.freeze_actor:
            theta[lo:lo + na] += (b_t * delta) * psi_b

        # constraint trackers, then multipliers reading pre-update trackers
        cap = self.projections.multiplier_cap
        for k in range(self.n_cons):
            u_pre = U[k]
            U[k] = u_pre + a_t * (hs[k] - u_pre)
            if not self.freeze_multipliers:
                y = gam[k] + c_t * (u_pre - alphas[k])
                gam[k] = max(0.0, min(y, cap))

        if self.algorithm == "cnac":
            fisher.flat *= 1.0 - a_t
            if fisher.ridge:
                fisher.flat[fisher.diag_idx] += a_t * fisher.ridge
            n = int(fisher.sizes[s])
            foff = int(fisher.offsets[s])
            blk = fisher.flat[foff:foff + n * n].reshape(n, n)
            blk += a_t * np.outer(psi_b, psi_b)
            fisher.since_refresh += 1
            if fisher.since_refresh >= fisher.refresh_every:
                fisher.refresh(t + 1)

        st.avg_cost_est = L_new
        st.raw_cost_est = raw_new
        st.t = t + 1
        st.s_current = s1

    def step(self, state: LearnerState, rng: np.random.Generator) -> LearnerState:
        out = state.copy()
        self._advance(out, rng)
        return out

    def run(self, state: LearnerState, rng: np.random.Generator, *,
            total_steps: int, snapshot_every: int = 1000,
            window_frac: float = 0.1, oracle_probe=None,
            track_v_star: np.ndarray | None = None) -> RunResult:
        """Advance `total_steps` iterations, recording snapshots.

        Snapshots are taken at the initial state and after every
        `snapshot_every` iterations (plus the final one). Window means
        average the post-update running estimates over the trailing
        `window_frac` fraction of iterations. When `track_v_star` is given
        the squared critic distance to it is recorded for every iteration.
        """
        st = state.copy()
        rows = {k: [] for k in ("t", "avg_cost_est", "raw_cost_est",
                                "theta_norm", "v_norm")}
        rows["constraint_ests"] = []
        rows["multipliers"] = []
        oracle_rows = {k: [] for k in ("exact_lagrangian", "grad_sq_norm",
                                       "critic_err_sq")} if oracle_probe else None

        def record():
            rows["t"].append(st.t)
            rows["avg_cost_est"].append(st.avg_cost_est)
            rows["raw_cost_est"].append(st.raw_cost_est)
            rows["constraint_ests"].append(st.constraint_ests.copy())
            rows["multipliers"].append(st.multipliers.copy())
            rows["theta_norm"].append(float(np.linalg.norm(st.theta)))
            rows["v_norm"].append(float(np.linalg.norm(st.v)))
            if oracle_probe is not None:
                exact_l, grad_sq, v_star = oracle_probe(st.theta,
                                                        st.multipliers)
                oracle_rows["exact_lagrangian"].append(exact_l)
                oracle_rows["grad_sq_norm"].append(grad_sq)
                diff = st.v - v_star
                oracle_rows["critic_err_sq"].append(float(diff @ diff))

        window_steps = max(1, int(round(window_frac * total_steps)))
        window_start = total_steps - window_steps
        acc_cost = 0.0
        acc_cons = np.zeros(self.n_cons)
        err = None
        if track_v_star is not None:
            err = np.empty(total_steps + 1)
            diff = st.v - track_v_star
            err[0] = float(diff @ diff)

        record()
        for step_i in range(total_steps):
            self._advance(st, rng)
            if err is not None:
                diff = st.v - track_v_star
                err[step_i + 1] = float(diff @ diff)
            if step_i >= window_start:
                acc_cost += st.raw_cost_est
                acc_cons += st.constraint_ests
            if st.t % snapshot_every == 0 or step_i == total_steps - 1:
                record()

        snapshots = {k: np.asarray(vals) for k, vals in rows.items()}
        if oracle_probe is not None:
            for k, vals in oracle_rows.items():
                snapshots[k] = np.asarray(vals)
        return RunResult(
            final=st, snapshots=snapshots,
            window_avg_cost=acc_cost / window_steps,
            window_avg_constraints=acc_cons / window_steps,
            window_steps=window_steps,
            fisher_log=list(st.fisher.refresh_log) if st.fisher else [],
            critic_err_sq=err)


def cac_step(state: LearnerState, model: TabularCmdp, policy: SoftmaxPolicy,
             features: StateFeatures, schedule: StepSchedule,
             projections: ProjectionSpec, rng: np.random.Generator,
             ) -> LearnerState:
    """One update of the plain learner; see LearnerEngine for loops."""
    eng = LearnerEngine(model, policy, features, schedule, projections,
                        algorithm="cac")
    return eng.step(state, rng)


def cnac_step(state: LearnerState, model: TabularCmdp, policy: SoftmaxPolicy,
              features: StateFeatures, schedule: StepSchedule,
              projections: ProjectionSpec, rng: np.random.Generator,
              ) -> LearnerState:
    """One update of the natural variant; state must carry a FisherState."""
    if state.fisher is None:
        raise ValueError("natural step requires a score-matrix state; "
                         "build the state with algorithm='cnac'")
    eng = LearnerEngine(model, policy, features, schedule, projections,
                        algorithm="cnac")
    return eng.step(state, rng)
