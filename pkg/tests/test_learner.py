import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from camdp import learner, oracles
from camdp.distributions import Deterministic
from camdp.fixtures import get_fixture
from camdp.learner import (DenseFisher, FisherState, LearnerEngine,
                           ProjectionSpec, ScheduleError, StepSchedule,
                           cac_step, cnac_step, fisher_update, initial_state,
                           mixing_time, project_critic, project_multiplier,
                           step_sizes, td_error)
from camdp.model import StateFeatures, TabularCmdp
from camdp.policy import SoftmaxPolicy

PROJ = ProjectionSpec()


def make_engine(name="three_state", algorithm="cac", schedule=None,
                features=None, **kwargs):
    fx = get_fixture(name)
    pol = SoftmaxPolicy.for_model(fx.model)
    feats = features if features is not None else fx.features
    sched = schedule or StepSchedule()
    eng = LearnerEngine(fx.model, pol, feats, sched, PROJ,
                        algorithm=algorithm, **kwargs)
    st0 = initial_state(fx.model, pol, feats, algorithm=algorithm)
    return fx, eng, st0


# --- schedules -----------------------------------------------------------------

def test_schedule_defaults_at_zero():
    assert step_sizes(StepSchedule(), 0) == (1.0, 1.0, 1.0)


def test_schedule_power_law_value():
    a, _, _ = step_sizes(StepSchedule(), 31)
    assert a == pytest.approx(0.25, abs=1e-12)      # 32 ** 0.4 == 2 ** 2


def test_schedule_ratio_decreases():
    sched = StepSchedule()
    ratios = [sched.at(t)[1] / sched.at(t)[0] for t in range(0, 200)]
    assert all(r2 < r1 for r1, r2 in zip(ratios, ratios[1:]))


def test_schedule_ordering_strict_after_start():
    sched = StepSchedule()
    for t in [1, 2, 10, 1000, 10 ** 6]:
        a, b, c = sched.at(t)
        assert a > b > c


def test_schedule_validation():
    with pytest.raises(ScheduleError):
        StepSchedule(omega=0.6, sigma=0.4)
    with pytest.raises(ScheduleError):
        StepSchedule(beta=1.2)
    with pytest.raises(ScheduleError):
        StepSchedule(c_a=0.0)


# --- projections ---------------------------------------------------------------

def test_critic_projection_inside_ball_is_identity():
    spec = ProjectionSpec(critic_radius=10.0)
    v = np.array([3.0, 4.0])
    assert np.array_equal(project_critic(v, spec), v)


def test_critic_projection_scales_to_radius():
    spec = ProjectionSpec(critic_radius=2.5)
    out = project_critic(np.array([3.0, 4.0]), spec)
    assert np.allclose(out, [1.5, 2.0], atol=1e-15)


def test_critic_projection_idempotent():
    # idempotent up to one rounding of the rescaled norm
    spec = ProjectionSpec(critic_radius=1.0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.normal(size=4, scale=3.0)
        once = project_critic(v, spec)
        twice = project_critic(once, spec)
        assert np.allclose(twice, once, rtol=4e-16, atol=0.0)


@given(st.floats(-50.0, 150.0))
def test_multiplier_clamp(y):
    spec = ProjectionSpec(multiplier_cap=100.0)
    out = project_multiplier(y, spec)
    assert 0.0 <= out <= 100.0
    if 0.0 <= y <= 100.0:
        assert out == y


def test_multiplier_examples():
    spec = ProjectionSpec(multiplier_cap=10.0)
    assert project_multiplier(-0.3, spec) == 0.0
    assert project_multiplier(0.2, spec) == 0.2
    assert project_multiplier(11.0, spec) == 10.0


# --- TD error ------------------------------------------------------------------

def test_td_error_direct_arithmetic():
    delta = td_error(1.0, [2.0], [0.5], [0.5], 0.0, np.zeros(2),
                     np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert delta == 1.75


def test_td_error_all_zero():
    z = np.zeros(2)
    assert td_error(0.0, [0.0], [0.0], [0.0], 0.0, z, z, z) == 0.0


def test_td_error_centered_at_fixed_point():
    # with v = v* and L = L(theta, gamma), E[delta f_s] = 0 over the
    # stationary law; 1e6 vectorized samples put each component within
    # five standard errors
    fx = get_fixture("two_state")
    model = fx.model
    pol = SoftmaxPolicy.for_model(model)
    gamma = np.array([0.25])
    feats = StateFeatures.identity(2)
    mu = oracles.stationary_distribution(model, pol)
    L, _, _ = oracles.exact_lagrangian(model, pol, gamma)
    v_star = oracles.td_fixed_point(model, pol, gamma, feats).v_star

    n = 1_000_000
    rng = np.random.default_rng(99)
    s = rng.choice(2, size=n, p=mu)
    pi = np.stack([pol.action_probs(k) for k in range(2)])
    a = (rng.random(n) > pi[s, 0]).astype(int)
    nxt_cdf = np.cumsum(model.transition, axis=2)
    s1 = (rng.random(n)[:, None] > nxt_cdf[s, a]).sum(axis=1)
    q = model.mean_cost()[s, a]                 # costs are deterministic
    h = model.mean_constraints()[0][s, a]
    delta = q + gamma[0] * (h - 0.5) - L + v_star[s1] - v_star[s]
    for state in range(2):
        comp = delta * (s == state)
        se = comp.std(ddof=1) / math.sqrt(n)
        assert abs(comp.mean()) < 5 * se + 1e-6


# --- single steps --------------------------------------------------------------

def zero_cost_model():
    p = np.array([[[0.6, 0.4], [0.2, 0.8]],
                  [[0.5, 0.5], [0.7, 0.3]]])
    return TabularCmdp(2, 2, p, constraints=[{}], alphas=[0.5], u_c=1.0)


def test_zero_cost_step_changes_only_clock_and_state():
    model = zero_cost_model()
    pol = SoftmaxPolicy.for_model(model)
    feats = StateFeatures.identity(2)
    st0 = initial_state(model, pol, feats)
    # gamma = 0 kills the threshold term, so every increment vanishes
    out = cac_step(st0, model, pol, feats, StepSchedule(), PROJ,
                   np.random.default_rng(0))
    assert out.t == 1
    assert np.array_equal(out.theta, st0.theta)
    assert np.array_equal(out.v, st0.v)
    assert out.avg_cost_est == 0.0
    assert np.array_equal(out.multipliers, st0.multipliers)
    assert np.array_equal(out.constraint_ests, st0.constraint_ests)


def test_step_and_run_agree_bitwise():
    for algorithm in ("cac", "cnac"):
        fx, eng, st0 = make_engine(algorithm=algorithm,
                                   schedule=StepSchedule(c_a=0.9))
        rng_a = np.random.Generator(np.random.PCG64(17))
        state = st0.copy()
        for _ in range(1500):
            state = eng.step(state, rng_a)
        rng_b = np.random.Generator(np.random.PCG64(17))
        result = eng.run(st0.copy(), rng_b, total_steps=1500,
                         snapshot_every=500)
        assert np.array_equal(state.theta, result.final.theta)
        assert np.array_equal(state.v, result.final.v)
        assert state.avg_cost_est == result.final.avg_cost_est
        assert state.raw_cost_est == result.final.raw_cost_est
        assert np.array_equal(state.multipliers, result.final.multipliers)
        assert state.s_current == result.final.s_current
        if algorithm == "cnac":
            assert np.array_equal(state.fisher.flat, result.final.fisher.flat)


def test_identical_seeds_reproduce_trajectories():
    _, eng, st0 = make_engine()
    runs = []
    for _ in range(2):
        rng = np.random.Generator(np.random.PCG64(5))
        res = eng.run(st0.copy(), rng, total_steps=3000, snapshot_every=1000)
        runs.append(res)
    assert np.array_equal(runs[0].snapshots["avg_cost_est"],
                          runs[1].snapshots["avg_cost_est"])
    assert np.array_equal(runs[0].final.theta, runs[1].final.theta)


def test_kernel_delta_matches_td_error_op():
    fx, eng, st0 = make_engine(name="two_state",
                               features=StateFeatures.identity(2))
    rng = np.random.default_rng(4)
    state = st0.copy()
    # evolve a little so estimates are nonzero
    for _ in range(50):
        state = eng.step(state, rng)
    # replay one step manually with a cloned generator
    clone = np.random.Generator(np.random.PCG64())
    clone.bit_generator.state = rng.bit_generator.state
    nxt = eng.step(state, rng)
    pol = SoftmaxPolicy.for_model(fx.model, theta=state.theta)
    i = pol.sample_action(state.s_current, clone)
    a = fx.model.feasible_actions[state.s_current][i]
    from camdp.model import sample_step
    s1, q, h = sample_step(fx.model, state.s_current, a, clone)
    assert s1 == nxt.s_current
    F = np.eye(2)
    delta = td_error(q, h, state.multipliers, fx.model.alphas,
                     state.avg_cost_est, state.v,
                     F[state.s_current], F[s1])
    # reconstruct delta from the critic update the kernel applied
    a_t = StepSchedule().at(state.t)[0]
    implied = (nxt.v[state.s_current] - state.v[state.s_current]) / a_t
    assert implied == pytest.approx(delta, abs=1e-12)


def test_natural_step_with_identity_matrix_matches_plain_step():
    fx = get_fixture("two_state")
    pol = SoftmaxPolicy.for_model(fx.model)
    feats = StateFeatures.identity(2)
    sched = StepSchedule(c_a=0.5)
    plain = initial_state(fx.model, pol, feats, algorithm="cac")
    natural = initial_state(fx.model, pol, feats, algorithm="cnac",
                            fisher_p=1.0)
    out_plain = cac_step(plain, fx.model, pol, feats, sched, PROJ,
                         np.random.Generator(np.random.PCG64(3)))
    out_natural = cnac_step(natural, fx.model, pol, feats, sched, PROJ,
                            np.random.Generator(np.random.PCG64(3)))
    # G(0) = I so the preconditioned direction equals the raw score
    assert np.array_equal(out_plain.theta, out_natural.theta)
    assert np.array_equal(out_plain.v, out_natural.v)


def test_run_invariants_short():
    for algorithm in ("cac", "cnac"):
        fx, eng, st0 = make_engine(algorithm=algorithm,
                                   schedule=StepSchedule(c_a=0.9))
        rng = np.random.default_rng(0)
        state = st0.copy()
        u_r = fx.model.u_c + 1 * PROJ.multiplier_cap * (fx.model.u_c + 0.5)
        for _ in range(2000):
            state = eng.step(state, rng)
            assert np.linalg.norm(state.v) <= PROJ.critic_radius + 1e-9
            assert 0.0 <= state.multipliers[0] <= PROJ.multiplier_cap
            assert abs(state.avg_cost_est) <= u_r
            assert 0.0 <= state.constraint_ests[0] <= fx.model.u_c
            assert np.all(np.isfinite(state.theta))


# --- score matrix --------------------------------------------------------------

def test_fisher_update_direct_arithmetic():
    f = DenseFisher(g=np.eye(2), g_inv=np.eye(2))
    out = fisher_update(f, 0.5, np.array([1.0, 0.0]))
    assert np.array_equal(out.g, np.diag([1.0, 0.5]))


def test_fisher_update_zero_score_rescales():
    f = DenseFisher(g=2.0 * np.eye(3), g_inv=0.5 * np.eye(3))
    out = fisher_update(f, 0.25, np.zeros(3))
    assert np.allclose(out.g, 1.5 * np.eye(3), atol=1e-15)
    assert np.allclose(out.g_inv, (0.5 / 0.75) * np.eye(3), atol=1e-15)


def test_fisher_update_rejects_unit_step():
    f = DenseFisher(g=np.eye(2), g_inv=np.eye(2))
    with pytest.raises(ScheduleError):
        fisher_update(f, 1.0, np.array([1.0, 0.0]))


def test_fisher_incremental_inverse_tracks_refresh():
    rng = np.random.default_rng(8)
    d = 6
    f = DenseFisher(g=np.eye(d), g_inv=np.eye(d))
    sched = StepSchedule(c_a=0.9)
    for t in range(1000):
        psi = rng.normal(size=d, scale=0.5)
        f = fisher_update(f, sched.at(t)[0], psi, refresh_every=250,
                          ridge=0.0)
        if f.count % 250 == 0:
            drift = np.abs(f.g @ f.g_inv - np.eye(d)).max()
            assert drift <= 1e-8


def test_block_state_matches_dense_recursion():
    fx = get_fixture("two_state")
    pol = SoftmaxPolicy.for_model(fx.model)
    feats = StateFeatures.identity(2)
    sched = StepSchedule(c_a=0.9)
    eng = LearnerEngine(fx.model, pol, feats, sched, PROJ, algorithm="cnac")
    state = initial_state(fx.model, pol, feats, algorithm="cnac",
                          fisher_ridge=1e-3)
    dense = state.fisher.matrix()
    rng = np.random.default_rng(21)
    clone = np.random.Generator(np.random.PCG64())
    for _ in range(200):
        clone.bit_generator.state = rng.bit_generator.state
        prev = state
        state = eng.step(state, rng)
        # replay the draw to recover (s, psi) for the dense recursion
        pol_t = pol.with_theta(prev.theta)
        i = pol_t.sample_action(prev.s_current, clone)
        psi = pol_t.log_policy_gradient(prev.s_current, i)
        a_t = sched.at(prev.t)[0]
        dense = (1.0 - a_t) * dense + a_t * (np.outer(psi, psi)
                                             + 1e-3 * np.eye(4))
    assert np.allclose(state.fisher.matrix(), dense, atol=1e-13)


def test_fisher_state_requires_positive_inputs():
    with pytest.raises(ValueError):
        FisherState.initial([2, 2], p=0.0)
    with pytest.raises(ValueError):
        FisherState.initial([2, 2], ridge=-1.0)


# --- mixing time ---------------------------------------------------------------

def test_mixing_time_power_of_two():
    sched = StepSchedule(c_a=0.25, omega=0.4, c_b=0.25, c_c=0.25)
    # at t = 0 every step size is 0.25 and 1 * 0.5^(m-1) <= 0.25 at m = 3
    assert mixing_time(1.0, 0.5, sched, 0) == 3


def test_mixing_time_zero_when_threshold_loose():
    sched = StepSchedule()
    # at t = 0 the smallest step size is 1 >= b / k
    assert mixing_time(0.4, 0.5, sched, 0) == 0


def test_mixing_time_grows_logarithmically():
    sched = StepSchedule()
    taus = {t: mixing_time(1.0, 0.5, sched, t)
            for t in (10 ** 2, 10 ** 3, 10 ** 4, 10 ** 5)}
    ratios = [taus[10 * t] / taus[t] for t in (10 ** 2, 10 ** 3, 10 ** 4)]
    assert max(ratios) < 2.0          # doubling t multiplies tau by ~const


def test_mixing_time_validates_inputs():
    with pytest.raises(ValueError):
        mixing_time(0.0, 0.5, StepSchedule(), 10)
    with pytest.raises(ValueError):
        mixing_time(1.0, 1.0, StepSchedule(), 10)


# --- fixed-policy critic trend ---------------------------------------------------

def test_frozen_critic_error_shrinks():
    fx = get_fixture("three_state")
    pol = SoftmaxPolicy.for_model(fx.model)
    feats = fx.features
    sched = StepSchedule()
    eng = LearnerEngine(fx.model, pol, feats, sched, PROJ,
                        freeze_actor=True, freeze_multipliers=True)
    st0 = initial_state(fx.model, pol, feats)
    v_star = oracles.td_fixed_point(fx.model, pol, np.zeros(1),
                                    feats).v_star
    rng = np.random.default_rng(1)
    res = eng.run(st0, rng, total_steps=100_000, snapshot_every=50_000,
                  track_v_star=v_star)
    err = res.critic_err_sq
    mean_early = err[1000:2000].mean()
    mean_late = err[-1000:].mean()
    assert mean_late < mean_early
    assert mean_late < 0.1 * err[0]
