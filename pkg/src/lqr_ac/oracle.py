"""Closed-form ground truth for the noisy LQR under Gaussian linear policies.

Everything here assumes full knowledge of (A, B, Q, R, D0, sigma). The learning
algorithms never call into this module except through explicit test hooks and
for trace metrics.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InstabilityError
from .symlin import (
    _symmetrize,
    solve_dare,
    solve_discrete_lyapunov,
    spectral_radius,
    svec,
    sym_kron,
)


@dataclass(frozen=True, eq=False)
class LqrProblem:
    """Noisy LQR ``x' = A x + B u + eps``, ``eps ~ N(0, D0)``, cost ``x'Qx + u'Ru``.

    ``sigma`` is the exploration standard deviation of the Gaussian policy
    ``u ~ N(-K x, sigma^2 I)``.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    D0: np.ndarray
    sigma: float = 1.0
    name: str = field(default="lqr", compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        d, k = B.shape
        if A.shape != (d, d):
            raise ValueError(f"A has shape {A.shape}, expected {(d, d)} to match B {B.shape}")
        Q = _symmetrize(np.atleast_2d(self.Q), "Q")
        R = _symmetrize(np.atleast_2d(self.R), "R")
        D0 = _symmetrize(np.atleast_2d(self.D0), "D0")
        if Q.shape != (d, d) or D0.shape != (d, d):
            raise ValueError("Q and D0 must be d x d")
        if R.shape != (k, k):
            raise ValueError("R must be k x k")
        if np.min(np.linalg.eigvalsh(Q)) < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(R)) <= 0:
            raise ValueError("R must be positive definite")
        if np.min(np.linalg.eigvalsh(D0)) <= 0:
            raise ValueError("D0 must be positive definite")
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")
        for name, value in (("A", A), ("B", B), ("Q", Q), ("R", R), ("D0", D0)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def d(self):
        return self.B.shape[0]

    @property
    def k(self):
        return self.B.shape[1]

    @property
    def n(self):
        return self.d + self.k

    @cached_property
    def D_sigma(self):
        return self.D0 + self.sigma**2 * self.B @ self.B.T

    @cached_property
    def cost_matrix(self):
        """Block-diagonal diag(Q, R) so that c(x, u) = z' C z with z = (x, u)."""
        C = np.zeros((self.n, self.n))
        C[: self.d, : self.d] = self.Q
        C[self.d :, self.d :] = self.R
        return C

    def with_sigma(self, sigma):
        return LqrProblem(self.A, self.B, self.Q, self.R, self.D0, sigma, self.name)

    def closed_loop(self, K):
        return self.A - self.B @ np.asarray(K, dtype=float)

    def rho(self, K):
        return spectral_radius(self.closed_loop(K))

    def is_stabilizing(self, K):
        return self.rho(K) < 1.0

    def cost(self, x, u):
        return float(x @ self.Q @ x + u @ self.R @ u)

    @cached_property
    def optimal(self):
        """``(P*, K*)`` from the Riccati equation."""
        return solve_dare(self.A, self.B, self.Q, self.R)


@dataclass(frozen=True, eq=False)
class PolicyEvaluation:
    K: np.ndarray
    rho: float
    D_K: np.ndarray
    P_K: np.ndarray
    J: float
    E_K: np.ndarray
    grad: np.ndarray
    Omega_K: np.ndarray
    omega_star: np.ndarray
    Dtilde_K: np.ndarray
    L: np.ndarray
    A_K: np.ndarray
    b_K: np.ndarray


def _check_gain(prob, K):
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (prob.k, prob.d):
        raise ValueError(f"K has shape {K.shape}, expected {(prob.k, prob.d)}")
    rho = prob.rho(K)
    if not rho < 1.0:
        raise InstabilityError(f"gain is not stabilizing: rho(A - BK) = {rho:.6g}", rho=rho)
    return K, rho


def state_covariance(prob, K):
    """Stationary state covariance D_K of the closed loop."""
    K, _ = _check_gain(prob, K)
    return solve_discrete_lyapunov(prob.closed_loop(K), prob.D_sigma)


def value_matrix(prob, K):
    """P_K solving ``P = Q + K'RK + (A-BK)' P (A-BK)``."""
    K, _ = _check_gain(prob, K)
    F = prob.closed_loop(K)
    return solve_discrete_lyapunov(F.T, prob.Q + K.T @ prob.R @ K)


def average_cost(prob, K):
    P = value_matrix(prob, K)
    return float(np.trace(P @ prob.D_sigma) + prob.sigma**2 * np.trace(prob.R))


def q_matrix(prob, P_K):
    """Omega_K, the quadratic part of the Q-function."""
    A, B = prob.A, prob.B
    top = np.hstack([prob.Q + A.T @ P_K @ A, A.T @ P_K @ B])
    bottom = np.hstack([B.T @ P_K @ A, prob.R + B.T @ P_K @ B])
    Omega = np.vstack([top, bottom])
    return 0.5 * (Omega + Omega.T)


def joint_transition(prob, K):
    """L with (x', u') = L (x, u) + noise."""
    K = np.asarray(K, dtype=float)
    return np.vstack([np.eye(prob.d), -K]) @ np.hstack([prob.A, prob.B])


def joint_noise_covariance(prob, K):
    K = np.asarray(K, dtype=float)
    D0 = prob.D0
    return np.block([
        [D0, -D0 @ K.T],
        [-K @ D0, K @ D0 @ K.T + prob.sigma**2 * np.eye(prob.k)],
    ])


def joint_stationary_covariance(prob, K, D_K=None):
    """Stationary covariance of the state-action pair (x, u), block form."""
    K, _ = _check_gain(prob, K)
    if D_K is None:
        D_K = state_covariance(prob, K)
    G = np.vstack([np.eye(prob.d), -K])
    Dt = G @ D_K @ G.T
    Dt[prob.d :, prob.d :] += prob.sigma**2 * np.eye(prob.k)
    return 0.5 * (Dt + Dt.T)


def joint_stationary_covariance_lyapunov(prob, K):
    """Same quantity via the joint chain's Lyapunov equation."""
    K, _ = _check_gain(prob, K)
    return solve_discrete_lyapunov(joint_transition(prob, K), joint_noise_covariance(prob, K))


def td_matrix(Dtilde, L):
    """A_K = 2 (D~ (x)s D~)(I - L' (x)s L')."""
    m = Dtilde.shape[0] * (Dtilde.shape[0] + 1) // 2
    return 2.0 * sym_kron(Dtilde, Dtilde) @ (np.eye(m) - sym_kron(L.T, L.T))


def td_vector(Dtilde, cost_matrix):
    """b_K = E[(c - J) phi] = 2 svec(D~ C D~), independent of the Q-function."""
    return 2.0 * svec(Dtilde @ cost_matrix @ Dtilde)


def evaluate_policy(prob, K):
    """All closed-form quantities for a stabilizing gain K."""
    K, rho = _check_gain(prob, K)
    F = prob.closed_loop(K)
    D_K = solve_discrete_lyapunov(F, prob.D_sigma)
    P_K = solve_discrete_lyapunov(F.T, prob.Q + K.T @ prob.R @ K)
    J = float(np.trace(P_K @ prob.D_sigma) + prob.sigma**2 * np.trace(prob.R))
    E_K = (prob.R + prob.B.T @ P_K @ prob.B) @ K - prob.B.T @ P_K @ prob.A
    Omega = q_matrix(prob, P_K)
    Dt = joint_stationary_covariance(prob, K, D_K)
    L = joint_transition(prob, K)
    return PolicyEvaluation(
        K=K,
        rho=rho,
        D_K=D_K,
        P_K=P_K,
        J=J,
        E_K=E_K,
        grad=2.0 * E_K @ D_K,
        Omega_K=Omega,
        omega_star=svec(Omega),
        Dtilde_K=Dt,
        L=L,
        A_K=td_matrix(Dt, L),
        b_K=td_vector(Dt, prob.cost_matrix),
    )


def td_operator(prob, K):
    ev = evaluate_policy(prob, K)
    return ev.A_K, ev.b_K


def q_value(prob, K, x, u, ev=None):
    """Centered average-cost Q-function Q_K(x, u)."""
    if ev is None:
        ev = evaluate_policy(prob, K)
    z = np.concatenate([np.atleast_1d(x), np.atleast_1d(u)]).astype(float)
    if z.size != prob.n:
        raise ValueError(f"(x, u) has length {z.size}, expected {prob.n}")
    # R is k x k and P_K B B' is d x d, so the trace of the sum is read as a sum of traces
    offset = prob.sigma**2 * (np.trace(prob.R) + np.trace(ev.P_K @ prob.B @ prob.B.T)) + np.trace(ev.P_K @ ev.D_K)
    return float(z @ ev.Omega_K @ z - offset)


def gradient_domination_bounds(prob, K, Kstar=None):
    """``(lower, gap, upper)`` with ``lower <= gap <= upper`` for stabilizing K."""
    if Kstar is None:
        Kstar = prob.optimal[1]
    ev = evaluate_policy(prob, K)
    ev_star = evaluate_policy(prob, Kstar)
    tr = float(np.trace(ev.E_K.T @ ev.E_K))
    smin_D0 = float(np.min(np.linalg.eigvalsh(prob.D0)))
    smin_R = float(np.min(np.linalg.eigvalsh(prob.R)))
    curv = np.linalg.norm(prob.R + prob.B.T @ ev.P_K @ prob.B, 2)
    lower = smin_D0 / curv * tr
    upper = np.linalg.norm(ev_star.D_K, 2) / smin_R * tr
    return lower, ev.J - ev_star.J, upper


def almost_smoothness_residual(prob, K, Kp):
    """Absolute error of the exact second-order expansion of J(K') - J(K)."""
    ev = evaluate_policy(prob, K)
    evp = evaluate_policy(prob, Kp)
    dK = ev.K - evp.K
    curv = prob.R + prob.B.T @ ev.P_K @ prob.B
    predicted = -2.0 * np.trace(evp.D_K @ dK.T @ ev.E_K) + np.trace(evp.D_K @ dK.T @ curv @ dK)
    return abs(evp.J - ev.J - predicted)


@dataclass(frozen=True)
class TheoryDiagnostics:
    """Constants from the convergence analysis.

    Bounds involving the norm-equivalence constant are evaluated with that
    constant set to 1 and are therefore only meaningful up to it.
    """

    lambda_lower: float
    covariance_bound: float
    cost_bound: float
    lipschitz_cost: float
    lipschitz_critic: float
    norm_constant: float = 1.0
    # populated when a concrete gain is supplied
    sigma_min_A_K: float = None
    joint_cov_norm: float = None
    joint_cov_bound: float = None


def theory_diagnostics(prob, Kbar, rho_bar, K=None, norm_constant=1.0):
    if not 0.0 < rho_bar < 1.0:
        raise ValueError("rho_bar must lie in (0, 1)")
    if Kbar < 0:
        raise ValueError("Kbar must be nonnegative")
    d = prob.d
    s2 = prob.sigma**2
    smin_D0 = float(np.min(np.linalg.eigvalsh(prob.D0)))
    terms = [smin_D0 / 2.0, s2 / 2.0]
    if Kbar > 0:
        terms.append(s2 / (8.0 * Kbar**2))
    lam = 2.0 * (1.0 - rho_bar**2) * min(terms) ** 2

    nA = np.linalg.norm(prob.A, 2)
    nB = np.linalg.norm(prob.B, 2)
    nR = np.linalg.norm(prob.R, 2)
    nDs = np.linalg.norm(prob.D_sigma, 2)
    contraction = 1.0 - ((1.0 + rho_bar) / 2.0) ** 2
    cov_bound = norm_constant * nDs / contraction
    U = (
        np.linalg.norm(prob.Q, "fro")
        + d * Kbar**2
        + np.linalg.norm(prob.R, "fro")
        + s2 * np.trace(prob.R)
        + norm_constant * np.sqrt(d) * nDs / contraction
    )
    inner = Kbar * nB * (nA + Kbar * nB + 1.0) + 1.0
    l1 = 6.0 * norm_constant * d * Kbar / smin_D0 * nDs**2 / contraction * nR * inner
    l2 = 6.0 * norm_constant * d**1.5 * Kbar * (nA + nB) ** 2 / smin_D0 * nDs * nR / contraction * inner

    extra = {}
    if K is not None:
        ev = evaluate_policy(prob, K)
        extra = dict(
            sigma_min_A_K=float(np.linalg.svd(ev.A_K, compute_uv=False)[-1]),
            joint_cov_norm=float(np.linalg.norm(ev.Dtilde_K, 2)),
            joint_cov_bound=float(
                s2 * prob.k + np.linalg.norm(ev.D_K, 2) * (d + np.linalg.norm(ev.K, "fro") ** 2)
            ),
        )
    return TheoryDiagnostics(
        lambda_lower=float(lam),
        covariance_bound=float(cov_bound),
        cost_bound=float(U),
        lipschitz_cost=float(l1),
        lipschitz_critic=float(l2),
        norm_constant=norm_constant,
        **extra,
    )


def random_stabilizing_gain(prob, rng, scale=0.5, rho_max=0.95, center=None, max_halvings=60):
    """Perturb ``center`` (default K*) by a random direction until rho(A - BK) < rho_max.

    The perturbation starts with Frobenius norm ``scale * max(1, ||center||_F)``
    and is halved until the closed loop is stable enough.
    """
    if center is None:
        center = prob.optimal[1]
    center = np.asarray(center, dtype=float)
    direction = rng.standard_normal(center.shape)
    direction /= np.linalg.norm(direction)
    step = scale * max(1.0, np.linalg.norm(center))
    for _ in range(max_halvings):
        K = center + step * direction
        if prob.rho(K) < rho_max:
            return K
        step *= 0.5
    if prob.rho(center) < rho_max:
        return center.copy()
    raise InstabilityError("could not find a stabilizing perturbation", rho=prob.rho(center))


def cost_and_critic_target(prob, K):
    """``(J(K), omega*_K)`` without forming the TD operator; used on trace grids."""
    K, _ = _check_gain(prob, K)
    P_K = value_matrix(prob, K)
    J = float(np.trace(P_K @ prob.D_sigma) + prob.sigma**2 * np.trace(prob.R))
    return J, svec(q_matrix(prob, P_K))
