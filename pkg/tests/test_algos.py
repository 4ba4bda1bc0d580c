import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqr_ac import _kernels
from lqr_ac.algos import (
    Projection,
    Schedules,
    double_loop_nac,
    natural_gradient_estimate,
    project_ball,
    two_timescale_nac,
    uniform_frobenius_sphere,
    zeroth_order_npg,
)
from lqr_ac.env import make_rng, quadratic_features
from lqr_ac.errors import InstabilityError
from lqr_ac.harness.checks import stationary_batch
from lqr_ac.oracle import LqrProblem, cost_and_critic_target, evaluate_policy, random_stabilizing_gain
from lqr_ac.problems import example_1, example_2
from lqr_ac.records import SINGULAR, UNSTABLE, running_average
from lqr_ac.symlin import _triu

EX1, EX2 = example_1(), example_2()


def K0_for(prob, seed=0, scale=0.5):
    return random_stabilizing_gain(prob, make_rng(seed, "init"), scale=scale)


# schedules and small helpers

def test_schedule_defaults_and_validation():
    s = Schedules()
    assert (s.c_alpha, s.delta, s.c_beta, s.v, s.c_gamma, s.T) == (0.005, 0.6, 0.01, 0.4, 0.1, 10**6)
    assert s.alpha(0) == 0.005 and s.beta(0) == 0.01 and s.gamma(0) == 0.1
    with pytest.raises(ValueError):
        Schedules(delta=0.4, v=0.6)
    with pytest.raises(ValueError):
        Schedules(c_beta=0.0)
    with pytest.raises(ValueError):
        Schedules(T=0)
    c = Schedules.constant(0.1, 0.2, 0.3, 5)
    assert c.alpha(100) == 0.1 and c.beta(100) == 0.2 and c.gamma(100) == 0.3


@given(st.integers(0, 10**9))
def test_two_timescale_ratio_decays(t):
    s = Schedules()
    ratio = s.alpha(t) / s.beta(t)
    assert ratio == pytest.approx(s.alpha(0) / s.beta(0) * (1.0 + t) ** -(s.delta - s.v), rel=1e-12)
    if t > 0:
        assert ratio < s.alpha(0) / s.beta(0)


def test_natural_gradient_estimate_at_critic_fixed_point():
    for prob in (EX1, EX2):
        K = K0_for(prob)
        ev = evaluate_policy(prob, K)
        np.testing.assert_allclose(natural_gradient_estimate(ev.omega_star, K), ev.E_K, rtol=0, atol=1e-10)


def test_natural_gradient_estimate_zero_and_linear():
    K = K0_for(EX2)
    m = 28
    assert np.all(natural_gradient_estimate(np.zeros(m), K) == 0)
    rng = np.random.default_rng(0)
    for _ in range(10):
        a, b = rng.standard_normal((2, m))
        np.testing.assert_allclose(
            natural_gradient_estimate(a + b, K),
            natural_gradient_estimate(a, K) + natural_gradient_estimate(b, K), atol=1e-12,
        )
    with pytest.raises(ValueError):
        natural_gradient_estimate(np.zeros(10), K)


def test_project_ball():
    v = np.array([3.0, 4.0])
    np.testing.assert_allclose(project_ball(v, 1.0), [0.6, 0.8])
    assert project_ball(v, 10.0) is v


def test_uniform_frobenius_sphere():
    rng = make_rng(0)
    U = uniform_frobenius_sphere(3, 4, rng, size=100_000)
    np.testing.assert_allclose(np.sqrt((U**2).sum(axis=(1, 2))), 1.0, rtol=0, atol=1e-15)
    v = U.reshape(U.shape[0], -1)
    se = v.std(axis=0, ddof=1) / np.sqrt(v.shape[0])
    assert np.all(np.abs(v.mean(axis=0)) <= 3 * se)
    second = v.T @ v / v.shape[0]
    sq = (v[:, :, None] * v[:, None, :]) ** 2
    se2 = np.sqrt(np.maximum(sq.mean(axis=0) - second**2, 0) / v.shape[0])
    assert np.all(np.abs(second - np.eye(12) / 12) <= 4 * se2 + 1e-12)
    single = uniform_frobenius_sphere(2, 2, rng)
    assert single.shape == (2, 2) and np.linalg.norm(single) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        uniform_frobenius_sphere(0, 2, rng)


def test_projection_defaults():
    K = K0_for(EX1)
    J, w = cost_and_critic_target(EX1, K)
    radius, cap = Projection().resolve(EX1, K)
    assert radius == pytest.approx(10 * np.linalg.norm(w)) and cap == pytest.approx(10 * J)
    assert Projection(1.0, 2.0).resolve(EX1, K) == (1.0, 2.0)


# two-timescale actor-critic

def test_critic_fixed_point_is_mean_zero_drift():
    # at omega = omega*_K and eta = J(K), the expected critic update vanishes
    K = K0_for(EX1)
    ev = evaluate_policy(EX1, K)
    z, zn, c = stationary_batch(EX1, K, 100_000, make_rng(3, "eval"), ev.D_K)
    phi, phin = quadratic_features(z), quadratic_features(zn)
    td = c - ev.J + (phin - phi) @ ev.omega_star
    upd = td[:, None] * phi
    se = upd.std(axis=0, ddof=1) / np.sqrt(upd.shape[0])
    assert np.all(np.abs(upd.mean(axis=0)) <= 3 * se)


def test_frozen_actor_keeps_gain():
    K0 = K0_for(EX1)
    J, w = cost_and_critic_target(EX1, K0)
    rec = two_timescale_nac(EX1, K0, Schedules(c_alpha=0.0, T=2000), omega0=w, eta0=J, seed=1, trace_every=500)
    assert rec.ok
    np.testing.assert_array_equal(rec.K_final, K0)
    assert np.all(rec.column("rel_K_err") == rec.column("rel_K_err")[0])


@pytest.mark.parametrize("prob", [EX1, EX2], ids=["ex1", "ex2"])
def test_critic_oracle_gives_monotone_cost(prob):
    rec = two_timescale_nac(prob, K0_for(prob), Schedules.constant(0.01, 0.01, 0.1, 1500),
                            critic_oracle=True, seed=0, trace_every=50)
    J = rec.column("J_Kt")
    assert rec.ok and np.all(np.diff(J) <= 1e-12)
    assert J[-1] < J[0]


def test_trace_grid_and_running_averages():
    rec = two_timescale_nac(EX1, K0_for(EX1), Schedules(T=10), seed=0, trace_every=3)
    np.testing.assert_array_equal(rec.column("t"), [3, 6, 9, 10])
    np.testing.assert_array_equal(rec.column("samples"), rec.column("t"))
    np.testing.assert_allclose(rec.column("actor_gap_running_avg"), running_average(rec.column("actor_gap")))
    np.testing.assert_allclose(rec.column("critic_err_running_avg"), running_average(rec.column("critic_err_sq")))


def test_compiled_and_interpreted_kernels_agree():
    K0 = K0_for(EX2)
    kw = dict(sched=Schedules(T=300), seed=4, trace_every=100)
    a = two_timescale_nac(EX2, K0, compiled=True, **kw)
    b = two_timescale_nac(EX2, K0, compiled=False, **kw)
    np.testing.assert_allclose(a.rows, b.rows, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(a.K_final, b.K_final, rtol=1e-12, atol=1e-14)


def test_two_timescale_deterministic_given_seed():
    K0 = K0_for(EX1)
    a = two_timescale_nac(EX1, K0, Schedules(T=5000), seed=11)
    b = two_timescale_nac(EX1, K0, Schedules(T=5000), seed=11)
    c = two_timescale_nac(EX1, K0, Schedules(T=5000), seed=12)
    np.testing.assert_array_equal(a.rows, b.rows)
    assert not np.array_equal(a.rows, c.rows)


def test_chunking_does_not_change_result():
    K0 = K0_for(EX1)
    a = two_timescale_nac(EX1, K0, Schedules(T=4000), seed=2, trace_every=4000)
    b = two_timescale_nac(EX1, K0, Schedules(T=4000), seed=2, trace_every=250)
    np.testing.assert_array_equal(a.K_final, b.K_final)


def test_projection_and_step_bounds_hold_when_active():
    K0 = K0_for(EX2)
    proj = Projection(omega_radius=5.0, eta_cap=2.0)
    rec = two_timescale_nac(EX2, K0, Schedules(c_alpha=0.02, T=20_000), proj, seed=3, trace_every=1000)
    mon = rec.monitor
    assert mon["max_omega_norm"] <= 5.0 * (1 + 1e-12)
    assert mon["max_omega_norm"] > 4.99  # the ball was actually hit
    assert 0.0 <= mon["eta_min"] and mon["eta_max"] <= 2.0
    assert mon["eta_max"] == 2.0  # and the clamp
    assert mon["max_step_ratio"] <= 1.0
    assert np.all(rec.column("eta") <= 2.0)


def test_mixed_sampling_runs():
    rec = two_timescale_nac(EX1, K0_for(EX1), Schedules(T=3000), seed=0, sampling="mixed", mix_steps=5)
    assert rec.ok and rec.rows.shape[0] == 3


def test_unstable_run_aborts_with_record():
    K0 = K0_for(EX1, scale=0.5)
    rec = two_timescale_nac(EX1, K0, Schedules(c_alpha=50.0, T=2000), seed=0, trace_every=100)
    assert rec.status == UNSTABLE and rec.stability_violations == 1
    assert rec.column("rho_closed_loop")[-1] >= 1.0
    assert np.isnan(rec.column("J_Kt")[-1])


def test_continue_mode_counts_violations():
    K0 = K0_for(EX1, scale=0.5)
    rec = two_timescale_nac(EX1, K0, Schedules(c_alpha=50.0, T=500), seed=0, trace_every=100,
                            on_instability="continue")
    assert rec.stability_violations >= 1
    assert rec.status != UNSTABLE


def test_rejects_unstable_initial_gain():
    with pytest.raises(InstabilityError):
        two_timescale_nac(EX1, np.zeros((2, 2)), Schedules(T=10))
    with pytest.raises(ValueError):
        two_timescale_nac(EX1, K0_for(EX1), Schedules(T=10), on_instability="ignore")


# double-loop actor-critic

def test_double_loop_oracle_monotone_descent():
    rec = double_loop_nac(EX1.with_sigma(0.2), K0_for(EX1), outer_J=40, eta_step=0.05, critic_oracle=True)
    J = rec.column("J_Kt")
    assert rec.ok and np.all(np.diff(J) <= 1e-12) and J[-1] < J[0]
    assert np.all(rec.column("samples") == 0)


def test_double_loop_sample_accounting_and_projection():
    prob = EX1.with_sigma(0.2)
    rec = double_loop_nac(prob, K0_for(prob), inner_T=2000, outer_J=3, theta_radius=3.0, dual_radius=1.5, seed=1)
    np.testing.assert_array_equal(rec.column("samples"), [0, 2000, 4000, 6000])
    np.testing.assert_array_equal(rec.column("t"), [0, 1, 2, 3])
    assert rec.monitor["max_theta_norm"] <= 3.0 and rec.monitor["max_dual_norm"] <= 1.5


def test_double_loop_max_samples_stops_early():
    prob = EX1.with_sigma(0.2)
    rec = double_loop_nac(prob, K0_for(prob), inner_T=1000, outer_J=10, max_samples=2500, seed=1)
    assert rec.column("samples")[-1] == 3000


def test_gtd_kernels_agree():
    prob = EX2.with_sigma(0.2)
    K = K0_for(prob)
    rows, cols, scale = _triu(prob.n)
    noise = make_rng(0).standard_normal((500, prob.n))
    args = (prob.A, prob.B, prob.Q, prob.R, np.linalg.cholesky(prob.D0), prob.sigma, K, np.ones(prob.d),
            noise, 0.01, 50.0, 50.0, rows, cols, scale)
    a = _kernels.gtd_inner_loop(*args, np.zeros(2))
    b = _kernels.gtd_inner_loop_py(*args, np.zeros(2))
    assert a[0] == pytest.approx(b[0], rel=1e-12)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12, atol=1e-14)


def test_gtd_inner_loop_approaches_critic_fixed_point():
    # scalar system with a well conditioned TD operator so the primal-dual
    # iteration gets close to omega* in a modest number of steps
    prob = LqrProblem([[0.5]], [[1.0]], [[1.0]], [[1.0]], [[1.0]], sigma=1.0)
    K = np.array([[0.2]])
    J, w = cost_and_critic_target(prob, K)
    rows, cols, scale = _triu(2)
    errs = []
    for T in (10_000, 1_000_000):
        noise = make_rng(5).standard_normal((T + 1, 2))
        x0 = np.sqrt(evaluate_policy(prob, K).D_K[0, 0]) * noise[0, :1]
        v1, v2 = _kernels.gtd_inner_loop(prob.A, prob.B, prob.Q, prob.R, np.eye(1), 1.0, K, x0, noise,
                                         0.01, 1e3, 1e3, rows, cols, scale, np.zeros(2))
        errs.append(np.linalg.norm(v2 - w) / np.linalg.norm(w))
    assert errs[1] < errs[0]
    assert errs[1] < 0.01
    assert v1 == pytest.approx(J, rel=0.05)


# zeroth-order natural policy gradient

def test_zeroth_order_oracle_direction_is_natural_gradient():
    # replacing the rollout estimates by exact costs and D_K, the expected update
    # direction is grad J D_K^-1 / (kd) = 2 E_K / (kd); E[U U'] = I/(kd) is
    # realised exactly by averaging over an orthonormal basis
    prob = EX1
    K = K0_for(prob)
    ev = evaluate_policy(prob, K)
    k, d = K.shape
    r = 1e-6
    grad = np.zeros_like(K)
    for idx in np.ndindex(k, d):
        U = np.zeros_like(K)
        U[idx] = 1.0
        grad += (evaluate_policy(prob, K + r * U).J - ev.J) / r * U / (k * d)
    direction = grad @ np.linalg.inv(ev.D_K)
    np.testing.assert_allclose(direction, 2 * ev.E_K / (k * d), rtol=1e-4, atol=1e-5)


def test_zeroth_order_sample_accounting():
    rec = zeroth_order_npg(EX1, K0_for(EX1), z=100, l=10, outer_J=4, seed=0)
    np.testing.assert_array_equal(rec.column("samples"), [0, 2000, 4000, 6000, 8000])
    assert rec.ok


def test_zeroth_order_improves_example1():
    rec = zeroth_order_npg(EX1, K0_for(EX1), z=5000, l=20, r=0.1, eta=0.01, outer_J=30, seed=0)
    err = rec.column("rel_K_err")
    assert rec.ok and err[-1] < 0.5 * err[0]


def test_zeroth_order_improves_example2():
    rec = zeroth_order_npg(EX2, K0_for(EX2), z=20000, l=50, r=0.1, eta=0.01, outer_J=10, seed=0)
    err = rec.column("rel_K_err")
    assert rec.ok and err[-1] < err[0]


def test_zeroth_order_dimension_scaling_flag():
    a = zeroth_order_npg(EX1, K0_for(EX1), z=200, l=5, outer_J=1, seed=3)
    b = zeroth_order_npg(EX1, K0_for(EX1), z=200, l=5, outer_J=1, seed=3, dimension_scaled=True)
    K0 = K0_for(EX1)
    np.testing.assert_allclose(b.K_final - K0, 4 * (a.K_final - K0), rtol=1e-10)


def test_zeroth_order_singular_moment_aborts():
    prob = example_1(D0=np.diag([1.0, 1e-14]))
    rec = zeroth_order_npg(prob, prob.optimal[1], z=50, l=1, outer_J=3, init_dist="noise", seed=0)
    assert rec.status == SINGULAR


def test_zeroth_order_argument_checks():
    with pytest.raises(ValueError):
        zeroth_order_npg(EX1, K0_for(EX1), r=0.0)
    with pytest.raises(ValueError):
        zeroth_order_npg(EX1, K0_for(EX1), init_dist="uniform")
    with pytest.raises(InstabilityError):
        zeroth_order_npg(EX1, np.zeros((2, 2)))


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_seeded_determinism_all_algorithms(seed):
    K0 = K0_for(EX1)
    runs = [
        lambda: two_timescale_nac(EX1, K0, Schedules(T=500), seed=seed, trace_every=100),
        lambda: double_loop_nac(EX1, K0, inner_T=300, outer_J=2, seed=seed),
        lambda: zeroth_order_npg(EX1, K0, z=50, l=5, outer_J=2, seed=seed),
    ]
    for run in runs:
        a, b = run(), run()
        np.testing.assert_array_equal(a.rows, b.rows)
        assert a.status == b.status
