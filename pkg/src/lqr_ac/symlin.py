"""Dense symmetric-matrix linear algebra.

svec/smat use the row-major upper triangle with off-diagonal entries scaled
by sqrt(2), so that <svec(M), svec(N)> equals the Frobenius inner product.
"""
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, InstabilityError

SYM_TOL = 1e-10
_SQRT2 = np.sqrt(2.0)


def _symmetrize(M, name="M"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if np.max(np.abs(M - M.T), initial=0.0) > SYM_TOL * scale:
        raise ValueError(f"{name} is not symmetric within tolerance {SYM_TOL}")
    return 0.5 * (M + M.T)


def sym_dim(length):
    """Return n such that n(n+1)/2 == length, or raise ValueError."""
    n = int(round((np.sqrt(8 * length + 1) - 1) / 2))
    if n * (n + 1) // 2 != length or length < 1:
        raise ValueError(f"length {length} is not a triangular number")
    return n


@lru_cache(maxsize=None)
def _triu(n):
    rows, cols = np.triu_indices(n)
    scale = np.where(rows == cols, 1.0, _SQRT2)
    rows.setflags(write=False)
    cols.setflags(write=False)
    scale.setflags(write=False)
    return rows, cols, scale


@lru_cache(maxsize=None)
def _svec_basis(n):
    # U with svec(S) = U @ vec(S) (row-major vec) and U.T @ svec(S) = vec(S).
    rows, cols, _ = _triu(n)
    U = np.zeros((n * (n + 1) // 2, n * n))
    for p, (i, j) in enumerate(zip(rows, cols)):
        if i == j:
            U[p, i * n + i] = 1.0
        else:
            U[p, i * n + j] = U[p, j * n + i] = 1.0 / _SQRT2
    U.setflags(write=False)
    return U


def svec(M):
    """Symmetric vectorization of a symmetric matrix."""
    M = _symmetrize(M)
    rows, cols, scale = _triu(M.shape[0])
    return M[rows, cols] * scale


def smat(v):
    """Inverse of :func:`svec`; the output is exactly symmetric."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("smat expects a 1-D vector")
    n = sym_dim(v.size)
    rows, cols, scale = _triu(n)
    M = np.empty((n, n))
    vals = v / scale
    M[rows, cols] = vals
    M[cols, rows] = vals
    return M


def sym_kron(A, B):
    """Symmetric Kronecker product on svec coordinates.

    Satisfies ``sym_kron(A, B) @ svec(S) == svec((A S B' + B S A') / 2)`` for
    symmetric S.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise ValueError(f"sym_kron needs equal square matrices, got {A.shape} and {B.shape}")
    U = _svec_basis(A.shape[0])
    return 0.5 * U @ (np.kron(A, B) + np.kron(B, A)) @ U.T


def spectral_radius(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"spectral_radius needs a square matrix, got {M.shape}")
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def solve_discrete_lyapunov(F, S, direct_max_n=10):
    """Solve ``X = S + F X F'`` for a stable F.

    Small systems use the vectorized linear system ``(I - F kron F) x = vec(S)``;
    larger ones use Smith doubling.
    """
    F = np.asarray(F, dtype=float)
    S = _symmetrize(S, "S")
    n = S.shape[0]
    if F.shape != (n, n):
        raise ValueError(f"F has shape {F.shape}, expected {(n, n)}")
    rho = spectral_radius(F)
    if not rho < 1.0:
        raise InstabilityError(f"Lyapunov operator unstable: rho(F) = {rho:.6g} >= 1", rho=rho)
    if n <= direct_max_n:
        X = np.linalg.solve(np.eye(n * n) - np.kron(F, F), S.reshape(-1)).reshape(n, n)
    else:
        X = _smith_doubling(F, S)
    return 0.5 * (X + X.T)


def _smith_doubling(F, S, tol=1e-14, max_iter=200):
    X = S.copy()
    Fk = F.copy()
    for _ in range(max_iter):
        step = Fk @ X @ Fk.T
        X = X + step
        Fk = Fk @ Fk
        if np.linalg.norm(step) <= tol * np.linalg.norm(X):
            return X
    raise ConvergenceError("Smith doubling did not converge")


def dare_residual(A, B, Q, R, P):
    """Frobenius norm of the Riccati equation residual at P."""
    BtPA = B.T @ P @ A
    rhs = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(B.T @ P @ B + R, BtPA)
    return float(np.linalg.norm(P - rhs))


def solve_dare(A, B, Q, R, tol=1e-12, max_iter=100_000):
    """Fixed-point Riccati iteration started from P = Q.

    Returns ``(P, K)`` with ``K = (R + B'PB)^{-1} B'PA``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = _symmetrize(Q, "Q")
    R = _symmetrize(R, "R")
    d, k = B.shape
    if A.shape != (d, d) or Q.shape != (d, d) or R.shape != (k, k):
        raise ValueError("inconsistent DARE dimensions")
    if np.min(np.linalg.eigvalsh(R)) <= 0:
        raise ValueError("R must be positive definite")

    P = Q.copy()
    for _ in range(max_iter):
        BtPA = B.T @ P @ A
        P_new = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(B.T @ P @ B + R, BtPA)
        P_new = 0.5 * (P_new + P_new.T)
        if not np.all(np.isfinite(P_new)):
            raise ConvergenceError("Riccati iteration diverged (system not stabilizable?)")
        done = np.linalg.norm(P_new - P) <= tol * max(1.0, np.linalg.norm(P_new))
        P = P_new
        if done:
            break
    else:
        raise ConvergenceError(f"Riccati iteration did not converge in {max_iter} iterations")

    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    rho = spectral_radius(A - B @ K)
    if not rho < 1.0:
        raise ConvergenceError(f"DARE solution is not stabilizing: rho = {rho:.6g}")
    return P, K


def gaussian_quartic_moment(M, N):
    """E[g'Mg g'Ng] for g ~ N(0, I): 2 Tr(MN) + Tr(M) Tr(N)."""
    M = _symmetrize(M, "M")
    N = _symmetrize(N, "N")
    if M.shape != N.shape:
        raise ValueError(f"dimension mismatch: {M.shape} vs {N.shape}")
    return float(2.0 * np.trace(M @ N) + np.trace(M) * np.trace(N))


def psd_cholesky(cov, tol=1e-12):
    """Lower Cholesky factor of a covariance; raises instead of regularizing."""
    cov = _symmetrize(cov, "cov")
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("covariance is not positive definite") from exc
    if np.min(np.diag(L)) ** 2 <= tol * np.max(np.diag(cov)):
        raise np.linalg.LinAlgError("covariance is numerically singular")
    return L


def sample_gaussian(rng, cov, size=None):
    """Draw zero-mean Gaussian vectors with covariance ``cov`` (rows are samples)."""
    L = psd_cholesky(cov)
    n = L.shape[0]
    shape = (n,) if size is None else (size, n)
    return rng.standard_normal(shape) @ L.T
