"""Learning algorithms for the noisy LQR.

* :func:`two_timescale_nac` - single-sample two-timescale natural actor-critic.
* :func:`double_loop_nac` - natural actor-critic with a primal-dual TD inner loop.
* :func:`zeroth_order_npg` - zeroth-order natural policy gradient.

The oracle module is used only to compute trace metrics (and by explicitly
requested test hooks); the updates themselves see sampled costs only.
"""
import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .env import SamplingMode, make_rng
from .errors import InstabilityError
from .oracle import cost_and_critic_target, evaluate_policy, state_covariance
from .records import COMPLETED, NONFINITE, SINGULAR, UNSTABLE, RunRecord, TraceBuilder
from .symlin import _triu, psd_cholesky, smat, sym_dim

log = logging.getLogger(__name__)

_NOISE_BLOCK = 65536


@dataclass(frozen=True)
class Schedules:
    """Polynomially decaying step sizes ``c / (1 + t)^p``.

    The actor uses ``c_alpha, delta``; the critic and the average-cost tracker
    share the exponent ``v``. ``two_timescale=True`` enforces ``0 < v < delta < 1``.
    """

    c_alpha: float = 0.005
    delta: float = 0.6
    c_beta: float = 0.01
    v: float = 0.4
    c_gamma: float = 0.1
    T: int = 1_000_000
    two_timescale: bool = True

    def __post_init__(self):
        if self.c_alpha < 0 or self.c_beta <= 0 or self.c_gamma <= 0:
            raise ValueError("step-size coefficients must be positive (c_alpha may be 0)")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.two_timescale and not 0.0 < self.v < self.delta < 1.0:
            raise ValueError("two-timescale schedules need 0 < v < delta < 1")

    @classmethod
    def constant(cls, alpha, beta, gamma, T):
        return cls(alpha, 0.0, beta, 0.0, gamma, T, two_timescale=False)

    def alpha(self, t):
        return self.c_alpha / (1.0 + t) ** self.delta

    def beta(self, t):
        return self.c_beta / (1.0 + t) ** self.v

    def gamma(self, t):
        return self.c_gamma / (1.0 + t) ** self.v


@dataclass(frozen=True)
class Projection:
    """Radii for the critic ball and the average-cost clamp.

    ``None`` means "derive from the initial gain": ``10 ||omega*_{K0}||`` and
    ``10 J(K0)`` respectively.
    """

    omega_radius: float = None
    eta_cap: float = None
    scale: float = 10.0

    def resolve(self, prob, K0):
        if self.omega_radius is not None and self.eta_cap is not None:
            return float(self.omega_radius), float(self.eta_cap)
        J0, omega0 = cost_and_critic_target(prob, K0)
        radius = self.scale * np.linalg.norm(omega0) if self.omega_radius is None else self.omega_radius
        cap = self.scale * J0 if self.eta_cap is None else self.eta_cap
        if radius <= 0 or cap <= 0:
            raise ValueError("projection radii must be positive")
        return float(radius), float(cap)


def natural_gradient_estimate(omega, K):
    """``smat(omega)^22 K - smat(omega)^21`` for a k x d gain K."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    k, d = K.shape
    omega = np.asarray(omega, dtype=float)
    if sym_dim(omega.size) != d + k:
        raise ValueError(f"omega has length {omega.size}, expected {(d + k) * (d + k + 1) // 2}")
    M = smat(omega)
    return M[d:, d:] @ K - M[d:, :d]


def project_ball(v, radius):
    nrm = np.linalg.norm(v)
    if nrm > radius:
        return v * (radius / nrm)
    return v


def uniform_frobenius_sphere(kdim, ddim, rng, size=None):
    """Matrices uniform on the unit Frobenius sphere (normalized Gaussians)."""
    if kdim < 1 or ddim < 1:
        raise ValueError("dimensions must be >= 1")
    shape = (kdim, ddim) if size is None else (size, kdim, ddim)
    G = rng.standard_normal(shape)
    norms = np.sqrt(np.sum(G**2, axis=(-2, -1), keepdims=True))
    return G / norms


def _trace_point(trace, prob, K, J_star, K_star, t, samples, omega=None, eta=np.nan):
    rho = prob.rho(K)
    if not rho < 1.0:
        trace.add(t=t, samples=samples, rho_closed_loop=rho, eta=eta,
                  rel_K_err=np.linalg.norm(K - K_star) / np.linalg.norm(K_star))
        return
    J, omega_star = cost_and_critic_target(prob, K)
    crit = np.nan if omega is None else float(np.sum((omega - omega_star) ** 2))
    trace.add(
        t=t,
        samples=samples,
        critic_err_sq=crit,
        actor_gap=J - J_star,
        rel_K_err=np.linalg.norm(K - K_star) / np.linalg.norm(K_star),
        rho_closed_loop=rho,
        eta=eta,
        J_Kt=J,
    )


def two_timescale_nac(
    prob,
    K0,
    sched=Schedules(),
    proj=Projection(),
    rng=None,
    *,
    seed=0,
    sampling=SamplingMode.EXACT,
    mix_steps=50,
    trace_every=1000,
    on_instability="abort",
    omega0=None,
    eta0=0.0,
    critic_oracle=False,
    config_hash="",
    compiled=True,
):
    """Single-sample two-timescale natural actor-critic.

    Each iteration draws one stationary state, one transition and one
    follow-up action, then updates the average-cost estimate, the critic
    (projected onto a ball) and the actor, in that order.

    ``critic_oracle=True`` replaces the critic by omega*_{K_t} at every step
    (test hook: the actor then performs exact natural-gradient descent).
    ``on_instability`` is ``"abort"`` (default) or ``"continue"``; in the latter
    case unstable iterates are counted and the state chain simply continues.
    ``compiled=False`` runs the interpreted twin of the step kernel.
    """
    if rng is None:
        rng = make_rng(seed)
    sampling = SamplingMode(sampling)
    if on_instability not in ("abort", "continue"):
        raise ValueError("on_instability must be 'abort' or 'continue'")
    d, k, n = prob.d, prob.k, prob.n
    K = np.array(K0, dtype=float).reshape(k, d)
    rho = prob.rho(K)
    if not rho < 1.0:
        raise InstabilityError(f"initial gain is not stabilizing: rho = {rho:.6g}", rho=rho)

    radius, eta_cap = proj.resolve(prob, K)
    K_star = prob.optimal[1]
    J_star = evaluate_policy(prob, K_star).J
    rows, cols, scale = _triu(n)
    m = rows.size
    omega = np.zeros(m) if omega0 is None else np.array(omega0, dtype=float)
    if omega.shape != (m,):
        raise ValueError(f"omega0 must have length {m}")
    omega = project_ball(omega, radius)
    eta = float(np.clip(eta0, 0.0, eta_cap))

    mixed = sampling is SamplingMode.MIXED
    width = 2 * d + 2 * k + (mix_steps * n if mixed else 0)
    steps_fn = _kernels.ac2t_steps if compiled else _kernels.ac2t_steps_py
    consts = (prob.A, prob.B, prob.Q, prob.R, np.linalg.cholesky(prob.D0),
              np.ascontiguousarray(prob.D_sigma.reshape(-1)), prob.sigma)
    sched_arr = np.array([sched.c_alpha, sched.delta, sched.c_beta, sched.v, sched.c_gamma])
    mon = np.array([np.linalg.norm(omega), eta, eta, 0.0])
    chain_x = np.zeros(d)
    fixed = np.zeros(m)

    trace = TraceBuilder()
    status, message = COMPLETED, ""
    violations = 0
    stable = True
    t = 0
    chunk = 1 if critic_oracle else min(trace_every, _NOISE_BLOCK)
    if trace_every < 1:
        raise ValueError("trace_every must be >= 1")
    next_trace = min(trace_every, sched.T)
    while t < sched.T:
        size = min(chunk, next_trace - t)
        noise = rng.standard_normal((size, width))
        if critic_oracle:
            if not stable:
                raise InstabilityError("critic oracle needs a stabilizing gain", rho=rho)
            fixed = cost_and_critic_target(prob, K)[1]
        code, steps, K, omega, eta, chain_x, viol, stable, rho = steps_fn(
            *consts, K, omega, eta, chain_x, t, noise, sched_arr, radius, eta_cap,
            mixed, mix_steps, on_instability == "abort", stable, fixed, critic_oracle,
            rows, cols, scale, mon,
        )
        t += steps
        violations += viol
        if code == _kernels.UNSTABLE:
            status, message = UNSTABLE, f"rho(A - BK) = {rho:.6g} at t={t}"
            _trace_point(trace, prob, K, J_star, K_star, t, t, omega, eta)
            break
        if code == _kernels.NONFINITE:
            status, message = NONFINITE, f"non-finite iterate at t={t}"
            break
        if t == next_trace:
            _trace_point(trace, prob, K, J_star, K_star, t, t, omega, eta)
            next_trace = min(next_trace + trace_every, sched.T)

    if status != COMPLETED:
        log.warning("two-timescale NAC seed %s stopped: %s", seed, message)
    monitor = dict(
        max_omega_norm=float(mon[0]), eta_min=float(mon[1]), eta_max=float(mon[2]),
        max_step_ratio=float(mon[3]), omega_radius=radius, eta_cap=eta_cap,
    )
    return RunRecord(
        algorithm="ac2t",
        seed=seed,
        config_hash=config_hash,
        rows=trace.build(),
        status=status,
        message=message,
        stability_violations=violations,
        monitor=monitor,
        K_final=K,
    )


def double_loop_nac(
    prob,
    K0,
    inner_T=500_000,
    outer_J=100,
    c_alpha=0.01,
    eta_step=0.05,
    theta_radius=None,
    dual_radius=None,
    rng=None,
    *,
    seed=0,
    critic_oracle=False,
    max_samples=None,
    config_hash="",
    compiled=True,
):
    """Double-loop natural actor-critic.

    Each outer step estimates the Q-matrix with a primal-dual gradient-TD
    inner loop run along one closed-loop trajectory (started from the
    stationary law) with step ``c_alpha / sqrt(1 + t)``; the step-weighted
    average of the primal critic then drives one natural-gradient step of
    size ``eta_step``. The primal variable ``(v1, v2)`` and the dual
    ``(w1, w2)`` are each projected onto a Euclidean ball whose default radius
    is ``10 ||(J(K0), omega*_{K0})||``. ``critic_oracle=True`` skips the inner
    loop and uses omega*_K directly.
    """
    if rng is None:
        rng = make_rng(seed)
    d, k, n = prob.d, prob.k, prob.n
    K = np.array(K0, dtype=float).reshape(k, d)
    rho = prob.rho(K)
    if not rho < 1.0:
        raise InstabilityError(f"initial gain is not stabilizing: rho = {rho:.6g}", rho=rho)
    K_star = prob.optimal[1]
    J_star = evaluate_policy(prob, K_star).J
    J0, omega0 = cost_and_critic_target(prob, K)
    default_radius = 10.0 * float(np.hypot(J0, np.linalg.norm(omega0)))
    theta_radius = default_radius if theta_radius is None else float(theta_radius)
    dual_radius = default_radius if dual_radius is None else float(dual_radius)

    rows, cols, scale = _triu(n)
    inner_fn = _kernels.gtd_inner_loop if compiled else _kernels.gtd_inner_loop_py
    L0 = np.linalg.cholesky(prob.D0)
    trace = TraceBuilder()
    status, message = COMPLETED, ""
    mon = np.zeros(2)
    samples = 0
    _trace_point(trace, prob, K, J_star, K_star, 0, 0)

    for j in range(outer_J):
        if critic_oracle:
            v1_hat, v_hat = cost_and_critic_target(prob, K)
        else:
            x0 = psd_cholesky(state_covariance(prob, K)) @ rng.standard_normal(d)
            noise = rng.standard_normal((inner_T + 1, d + k))
            v1_hat, v_hat = inner_fn(
                prob.A, prob.B, prob.Q, prob.R, L0, prob.sigma, K, x0, noise, c_alpha,
                theta_radius, dual_radius, rows, cols, scale, mon,
            )
            samples += inner_T
            if not np.all(np.isfinite(v_hat)):
                status, message = NONFINITE, f"non-finite critic at outer step {j + 1}"
                break

        Theta = smat(v_hat)
        K = K - eta_step * (Theta[d:, d:] @ K - Theta[d:, :d])
        rho = prob.rho(K)
        _trace_point(trace, prob, K, J_star, K_star, j + 1, samples, v_hat, v1_hat)
        if not rho < 1.0:
            status, message = UNSTABLE, f"rho(A - BK) = {rho:.6g} at outer step {j + 1}"
            break
        if max_samples is not None and samples >= max_samples:
            break

    return RunRecord(
        algorithm="double-loop",
        seed=seed,
        config_hash=config_hash,
        rows=trace.build(),
        status=status,
        message=message,
        stability_violations=int(status == UNSTABLE),
        monitor=dict(max_theta_norm=float(mon[0]), max_dual_norm=float(mon[1]),
                     theta_radius=theta_radius, dual_radius=dual_radius),
        K_final=K,
    )


def zeroth_order_npg(
    prob,
    K0,
    z=5000,
    l=20,
    r=0.1,
    eta=0.01,
    outer_J=1000,
    init_dist="stationary",
    rng=None,
    *,
    seed=0,
    rollout_sigma=0.0,
    dimension_scaled=False,
    max_samples=None,
    config_hash="",
):
    """Zeroth-order natural policy gradient with one-point smoothing.

    Per outer step, ``z`` base rollouts of length ``l`` under ``K`` and ``z``
    rollouts under ``K + r U_i`` start from shared initial states. The
    gradient estimate is ``mean((J_pert - J_base) / r * U_i)`` using
    un-averaged ``l``-step cost sums; the state second moment is the mean of
    ``sum_t y_t y_t'``. ``dimension_scaled=True`` multiplies the gradient by
    ``k * d``. Initial states come from ``N(0, D_K)`` (``"stationary"``) or
    ``N(0, D0)`` (``"noise"``). Rollout actions are ``-K x + rollout_sigma * zeta``.
    ``max_samples`` stops early once the cumulative sample count reaches it.
    """
    if rng is None:
        rng = make_rng(seed)
    if r <= 0 or z < 1 or l < 1:
        raise ValueError("need r > 0 and z, l >= 1")
    if init_dist not in ("stationary", "noise"):
        raise ValueError("init_dist must be 'stationary' or 'noise'")
    d, k = prob.d, prob.k
    A, B, Q, R = prob.A, prob.B, prob.Q, prob.R
    K = np.array(K0, dtype=float).reshape(k, d)
    rho = prob.rho(K)
    if not rho < 1.0:
        raise InstabilityError(f"initial gain is not stabilizing: rho = {rho:.6g}", rho=rho)
    K_star = prob.optimal[1]
    J_star = evaluate_policy(prob, K_star).J
    L0 = np.linalg.cholesky(prob.D0)

    trace = TraceBuilder()
    status, message = COMPLETED, ""
    samples = 0
    mon = dict(max_condition=0.0)
    _trace_point(trace, prob, K, J_star, K_star, 0, 0)

    def rollout(gains, x):
        # gains: (z, k, d); returns cost sums and (optionally) state moments
        total = np.zeros(x.shape[0])
        moment = np.zeros((d, d))
        for _ in range(l):
            u = -np.einsum("zkd,zd->zk", gains, x)
            if rollout_sigma > 0:
                u = u + rollout_sigma * rng.standard_normal(u.shape)
            total += np.einsum("zi,ij,zj->z", x, Q, x) + np.einsum("zi,ij,zj->z", u, R, u)
            moment += x.T @ x
            x = x @ A.T + u @ B.T + rng.standard_normal(x.shape) @ L0.T
        return total, moment

    for j in range(outer_J):
        chol = psd_cholesky(state_covariance(prob, K)) if init_dist == "stationary" else L0
        x0 = rng.standard_normal((z, d)) @ chol.T
        U = uniform_frobenius_sphere(k, d, rng, size=z)
        base = np.broadcast_to(K, (z, k, d))
        J_base, moment = rollout(base, x0)
        J_pert, _ = rollout(base + r * U, x0)
        grad = np.mean(((J_pert - J_base) / r)[:, None, None] * U, axis=0)
        if dimension_scaled:
            grad *= k * d
        Sigma = moment / z
        cond = np.linalg.cond(Sigma)
        mon["max_condition"] = max(mon["max_condition"], float(cond))
        samples += 2 * z * l
        if not cond <= 1e12:
            status, message = SINGULAR, f"state moment ill-conditioned (cond={cond:.3g}) at outer step {j + 1}"
            break
        K = K - eta * np.linalg.solve(Sigma.T, grad.T).T
        if not np.all(np.isfinite(K)):
            status, message = NONFINITE, f"non-finite gain at outer step {j + 1}"
            break
        rho = prob.rho(K)
        _trace_point(trace, prob, K, J_star, K_star, j + 1, samples)
        if not rho < 1.0:
            status, message = UNSTABLE, f"rho(A - BK) = {rho:.6g} at outer step {j + 1}"
            break
        if max_samples is not None and samples >= max_samples:
            break

    return RunRecord(
        algorithm="zeroth-order",
        seed=seed,
        config_hash=config_hash,
        rows=trace.build(),
        status=status,
        message=message,
        stability_violations=int(status == UNSTABLE),
        monitor=mon,
        K_final=K,
    )
