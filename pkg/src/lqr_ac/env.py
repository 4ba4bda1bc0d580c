"""Simulation of the noisy LQR: policies, transitions, costs and features.

Random numbers come from numpy's counter-based Philox generator. Each run
derives independent streams per purpose from its 64-bit seed, so algorithm
noise never shares draws with initialization or evaluation noise.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InstabilityError
from .oracle import state_covariance
from .symlin import _triu, psd_cholesky

PURPOSES = {"algorithm": 0, "init": 1, "eval": 2}


def make_rng(seed, purpose="algorithm"):
    """Philox generator for ``(seed, purpose)``; identical inputs give identical streams."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(PURPOSES[purpose],))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Transition:
    x: np.ndarray
    u: np.ndarray
    cost: float
    x_next: np.ndarray
    u_next: np.ndarray


class SamplingMode(str, Enum):
    EXACT = "exact"
    MIXED = "mixed"


def policy_action(K, x, sigma, rng):
    """u = -K x + sigma * zeta with zeta ~ N(0, I)."""
    K = np.atleast_2d(K)
    x = np.asarray(x, dtype=float)
    if K.shape[1] != x.shape[-1]:
        raise ValueError(f"K has shape {K.shape} but x has length {x.shape[-1]}")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    u = -x @ K.T
    if sigma > 0:
        u = u + sigma * rng.standard_normal(u.shape)
    return u


def step(prob, x, u, rng):
    """Return ``(cost, x_next)``; fresh process noise on every call."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1] != prob.d or u.shape[-1] != prob.k:
        raise ValueError(f"expected x of length {prob.d} and u of length {prob.k}")
    cost = np.einsum("...i,ij,...j->...", x, prob.Q, x) + np.einsum("...i,ij,...j->...", u, prob.R, u)
    noise = rng.standard_normal(x.shape) @ _noise_factor(prob).T
    x_next = x @ prob.A.T + u @ prob.B.T + noise
    return (float(cost) if np.ndim(cost) == 0 else cost), x_next


def _noise_factor(prob):
    # Plain Cholesky: D0 is PD by construction, however small its scale.
    return np.linalg.cholesky(prob.D0)


def transition(prob, K, x, rng):
    """One full (x, u, c, x', u') tuple under the Gaussian policy."""
    u = policy_action(K, x, prob.sigma, rng)
    cost, x_next = step(prob, x, u, rng)
    u_next = policy_action(K, x_next, prob.sigma, rng)
    return Transition(np.asarray(x, dtype=float), u, cost, x_next, u_next)


class StationarySampler:
    """Draws states from (an approximation of) the closed-loop stationary law.

    ``mode="exact"`` draws ``chol(D_K) g`` using the analytic covariance.
    ``mode="mixed"`` rolls the closed-loop chain ``mix_steps`` steps from the
    previously returned state and returns the last one.
    """

    def __init__(self, prob, mode=SamplingMode.EXACT, mix_steps=50, x_init=None):
        self.prob = prob
        self.mode = SamplingMode(mode)
        if self.mode is SamplingMode.MIXED and mix_steps < 1:
            raise ValueError("mix_steps must be >= 1")
        self.mix_steps = int(mix_steps)
        self.state = np.zeros(prob.d) if x_init is None else np.asarray(x_init, dtype=float)
        self._cached = (None, None)

    def __call__(self, K, rng):
        prob = self.prob
        K = np.asarray(K, dtype=float)
        if self.mode is SamplingMode.EXACT:
            K_prev, L = self._cached
            if K_prev is None or not np.array_equal(K_prev, K):
                L = psd_cholesky(state_covariance(prob, K))  # raises on an unstable K
                self._cached = (K.copy(), L)
            return L @ rng.standard_normal(prob.d)
        rho = prob.rho(K)
        if not rho < 1.0:
            raise InstabilityError(f"no stationary distribution: rho(A - BK) = {rho:.6g}", rho=rho)
        x = self.state
        for _ in range(self.mix_steps):
            u = policy_action(K, x, prob.sigma, rng)
            _, x = step(prob, x, u, rng)
        self.state = x
        return x


def sample_stationary(prob, K, mode, rng, sampler=None):
    """Functional wrapper; pass a persistent ``sampler`` to warm-start mixed mode."""
    if sampler is None:
        sampler = StationarySampler(prob, mode)
    return sampler(K, rng)


def feature(x, u):
    """phi(x, u) = svec(z z') with z = (x, u); works row-wise on batches."""
    z = np.concatenate([np.atleast_1d(x), np.atleast_1d(u)], axis=-1).astype(float)
    return quadratic_features(z)


def quadratic_features(z):
    z = np.asarray(z, dtype=float)
    rows, cols, scale = _triu(z.shape[-1])
    return z[..., rows] * z[..., cols] * scale
