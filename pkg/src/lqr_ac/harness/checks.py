"""Oracle identity and Monte-Carlo consistency suite behind ``lqr-ac check``."""
from dataclasses import dataclass

import numpy as np

from ..env import make_rng, quadratic_features
from ..oracle import (
    almost_smoothness_residual,
    evaluate_policy,
    gradient_domination_bounds,
    joint_stationary_covariance_lyapunov,
    random_stabilizing_gain,
)
from ..symlin import dare_residual, gaussian_quartic_moment

FD_STEP = 1e-5
TOL = dict(dare=1e-9, fd_grad=1e-5, natural_grad=1e-10, td_fixed_point=1e-8, smoothness=1e-8,
           optimality=1e-8, dtilde=1e-9, mc_se=3.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{flag}  {self.name:<22s} residual={self.residual:.3e}  tol={self.tolerance:.1e}{extra}"


def property_gains(prob, n, seed=0):
    rng = make_rng(seed, "init")
    return [random_stabilizing_gain(prob, rng) for _ in range(n)]


def finite_difference_gradient(prob, K, h=FD_STEP):
    G = np.zeros_like(K)
    for idx in np.ndindex(*K.shape):
        E = np.zeros_like(K)
        E[idx] = h
        G[idx] = (evaluate_policy(prob, K + E).J - evaluate_policy(prob, K - E).J) / (2 * h)
    return G


def stationary_batch(prob, K, size, rng, D_K=None):
    """(z, z', c) for ``size`` independent stationary transitions."""
    d, k = prob.d, prob.k
    if D_K is None:
        D_K = evaluate_policy(prob, K).D_K
    x = rng.standard_normal((size, d)) @ np.linalg.cholesky(D_K).T
    u = -x @ K.T + prob.sigma * rng.standard_normal((size, k))
    c = np.einsum("ni,ij,nj->n", x, prob.Q, x) + np.einsum("ni,ij,nj->n", u, prob.R, u)
    xn = x @ prob.A.T + u @ prob.B.T + rng.standard_normal((size, d)) @ np.linalg.cholesky(prob.D0).T
    un = -xn @ K.T + prob.sigma * rng.standard_normal((size, k))
    return np.hstack([x, u]), np.hstack([xn, un]), c


class _Moments:
    """Streaming mean and standard error of a family of sample products."""

    def __init__(self):
        self.n = 0
        self.s1 = 0.0
        self.s2 = 0.0

    def add(self, first, second):
        # entries (i, j) average first_i * second_j
        self.n += first.shape[0]
        self.s1 = self.s1 + first.T @ second
        self.s2 = self.s2 + (first**2).T @ (second**2)

    def mean_se(self):
        mean = self.s1 / self.n
        var = (self.s2 / self.n - mean**2) * self.n / (self.n - 1)
        return mean, np.sqrt(np.maximum(var, 0.0) / self.n)


def _zscores(est, se, exact):
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(est - exact) / se
    # an entry with zero spread must match exactly
    return np.where(se > 0, z, np.where(est == exact, 0.0, np.inf)).ravel()


def _mc_result(name, z, k_se):
    n_out = int(np.sum(z > k_se))
    worst = float(np.max(z)) if z.size else 0.0
    return CheckResult(name, n_out == 0, worst, k_se, f"max |err|/SE over {z.size} entries, {n_out} outside")


def monte_carlo_zscores(prob, K, n_samples=1_000_000, seed=0, chunk=100_000):
    """Entrywise |empirical - closed form| / SE for A_K, b_K and D~_K over stationary transitions."""
    ev = evaluate_policy(prob, K)
    rng = make_rng(seed, "eval")
    A_mom, b_mom, cov_mom = _Moments(), _Moments(), _Moments()
    done = 0
    while done < n_samples:
        size = min(chunk, n_samples - done)
        z, zn, c = stationary_batch(prob, ev.K, size, rng, ev.D_K)
        phi, phin = quadratic_features(z), quadratic_features(zn)
        A_mom.add(phi, phi - phin)
        b_mom.add((c - ev.J)[:, None], phi)
        cov_mom.add(z, z)
        done += size
    A_est, A_se = A_mom.mean_se()
    b_est, b_se = b_mom.mean_se()
    C_est, C_se = cov_mom.mean_se()
    iu = np.triu_indices(prob.n)
    return {
        "mc_A_K": _zscores(A_est, A_se, ev.A_K),
        "mc_b_K": _zscores(b_est[0], b_se[0], ev.b_K),
        "mc_joint_cov": _zscores(C_est[iu], C_se[iu], ev.Dtilde_K[iu]),
    }


def monte_carlo_checks(prob, K, n_samples=1_000_000, seed=0, chunk=100_000):
    """Every entry within 3 standard errors of its closed form."""
    zs = monte_carlo_zscores(prob, K, n_samples, seed, chunk)
    return [_mc_result(name, z, TOL["mc_se"]) for name, z in zs.items()]


def quartic_moment_check(dim=3, n_samples=1_000_000, seed=0):
    rng = make_rng(seed, "eval")
    G1, G2 = rng.standard_normal((2, dim, dim))
    M, N = G1 + G1.T, G2 + G2.T
    g = rng.standard_normal((n_samples, dim))
    s = np.einsum("ni,ij,nj->n", g, M, g) * np.einsum("ni,ij,nj->n", g, N, g)
    se = s.std(ddof=1) / np.sqrt(n_samples)
    err = abs(s.mean() - gaussian_quartic_moment(M, N))
    return CheckResult("mc_quartic_moment", err <= TOL["mc_se"] * se, err / se, TOL["mc_se"], "|err|/SE")


def _max_result(name, values, tol, detail=""):
    worst = float(np.max(values)) if len(values) else 0.0
    return CheckResult(name, worst <= tol, worst, tol, detail)


def identity_checks(prob, n_gains=20, seed=0, omega_perturbation=0.0):
    """Exact identities on K* and ``n_gains`` seeded random stabilizing gains.

    ``omega_perturbation`` shifts omega*_K before the TD fixed-point check; it
    exists so tests can confirm that check actually detects a wrong critic.
    """
    P, K_star = prob.optimal
    ev_star = evaluate_policy(prob, K_star)
    out = [CheckResult(
        "dare", dare_residual(prob.A, prob.B, prob.Q, prob.R, P) <= TOL["dare"] and ev_star.rho < 1,
        dare_residual(prob.A, prob.B, prob.Q, prob.R, P), TOL["dare"], f"rho(A - BK*) = {ev_star.rho:.4f}",
    )]
    gains = property_gains(prob, n_gains, seed)
    fd, nat, td, gd, sm, opt, dt = [], [], [], [], [], [], []
    for K in gains:
        ev = evaluate_policy(prob, K)
        G = finite_difference_gradient(prob, K)
        fd.append(np.linalg.norm(G - ev.grad) / np.linalg.norm(ev.grad))
        # grad D_K^-1 is 2 E_K; the factor 2 is conventionally folded into the step size
        nat.append(np.linalg.norm(0.5 * ev.grad @ np.linalg.inv(ev.D_K) - ev.E_K) / max(np.linalg.norm(ev.E_K), 1.0))
        omega = ev.omega_star + omega_perturbation
        td.append(np.max(np.abs(ev.A_K @ omega - ev.b_K)))
        lower, gap, upper = gradient_domination_bounds(prob, K, K_star)
        gd.append(max(lower - gap, gap - upper, 0.0) / max(abs(gap), 1e-300))
        Kp = K - 0.01 * np.linalg.solve(prob.R + prob.B.T @ ev.P_K @ prob.B, ev.E_K)
        sm.append(almost_smoothness_residual(prob, K, Kp) / ev.J)
        Kp2 = 0.5 * (K + K_star)
        sm.append(almost_smoothness_residual(prob, K, Kp2) / ev.J)
        opt.append(max(ev_star.J - ev.J, 0.0) / ev_star.J)
        dt.append(np.max(np.abs(joint_stationary_covariance_lyapunov(prob, K) - ev.Dtilde_K)))
    n = f"{len(gains)} gains"
    out += [
        _max_result("fd_gradient", fd, TOL["fd_grad"], f"rel. Frobenius error, h={FD_STEP:g}, {n}"),
        _max_result("natural_gradient", nat, TOL["natural_grad"], f"grad D_K^-1 = 2 E_K, {n}"),
        _max_result("td_fixed_point", td, TOL["td_fixed_point"], f"max |A_K omega* - b_K|, {n}"),
        _max_result("gradient_domination", gd, 0.0, f"relative sandwich violation, {n}"),
        _max_result("almost_smoothness", sm, TOL["smoothness"], f"residual / J(K), {2 * len(gains)} pairs"),
        _max_result("optimality", opt, TOL["optimality"], f"(J* - J(K))_+ / J*, {n}"),
        _max_result("dtilde_cross_check", dt, TOL["dtilde"], f"block vs Lyapunov route, {n}"),
    ]
    return out


def run_checks(prob, n_gains=20, mc_samples=1_000_000, seed=0, omega_perturbation=0.0):
    results = identity_checks(prob, n_gains, seed, omega_perturbation)
    if mc_samples > 0:
        K = random_stabilizing_gain(prob, make_rng(seed, "eval"), scale=0.2)
        results += monte_carlo_checks(prob, K, mc_samples, seed)
        results.append(quartic_moment_check(n_samples=mc_samples, seed=seed))
    return results
