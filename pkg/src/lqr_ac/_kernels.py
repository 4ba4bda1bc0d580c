"""Per-step inner loops, compiled with numba.

The functions are written in the numpy subset numba understands, so the
undecorated ``*_py`` versions run unchanged in the interpreter (used by tests
to cross-check the compiled path). All randomness is passed in as
pre-drawn standard normals.
"""
import numpy as np
from numba import njit

OK = 0
UNSTABLE = 1
NONFINITE = 2


def _spectral_radius(M):
    ev = np.linalg.eigvals(M.astype(np.complex128))
    return np.max(np.abs(ev))


def _fill_features(z, rows, cols, scale, out):
    for p in range(rows.size):
        out[p] = z[rows[p]] * z[cols[p]] * scale[p]


def ac2t_steps(
    A, B, Q, R, L0, vec_Ds, sigma,
    K, omega, eta, chain_x,
    t0, noise, sched, radius, eta_cap,
    mixed, mix_steps, abort_on_unstable, stable_in,
    fixed_omega, use_fixed_omega,
    rows, cols, scale, mon,
):
    """Run ``noise.shape[0]`` iterations of the two-timescale actor-critic.

    ``sched`` is ``(c_alpha, delta, c_beta, v, c_gamma)``. ``mon`` holds running
    ``[max ||omega||, min eta, max eta, max step ratio]`` and is updated in place.
    Returns ``(status, steps_done, K, omega, eta, chain_x, violations, stable, rho)``.
    """
    d = A.shape[0]
    k = B.shape[1]
    n = d + k
    c_alpha, delta, c_beta, v, c_gamma = sched[0], sched[1], sched[2], sched[3], sched[4]
    eye_dd = np.eye(d * d)
    z = np.empty(n)
    z_next = np.empty(n)
    phi = np.empty(rows.size)
    phi_next = np.empty(rows.size)
    M = np.empty((n, n))
    violations = 0
    stable = stable_in
    rho = 0.0
    status = OK
    steps = 0
    for i in range(noise.shape[0]):
        t = t0 + i
        nz = noise[i]
        if mixed or not stable:
            x = chain_x.copy()
            if mixed:
                off = 2 * d + 2 * k
                for s in range(mix_steps):
                    base = off + s * n
                    u = -(K @ x) + sigma * nz[base + d: base + n]
                    x = A @ x + B @ u + L0 @ nz[base: base + d]
        else:
            F = A - B @ K
            D_flat = np.linalg.solve(eye_dd - np.kron(F, F), vec_Ds)
            D_K = D_flat.reshape((d, d))
            D_K = 0.5 * (D_K + D_K.T)
            x = np.linalg.cholesky(D_K) @ nz[:d]

        u = -(K @ x) + sigma * nz[d: d + k]
        c = x @ (Q @ x) + u @ (R @ u)
        x_next = A @ x + B @ u + L0 @ nz[d + k: 2 * d + k]
        u_next = -(K @ x_next) + sigma * nz[2 * d + k: 2 * d + 2 * k]
        chain_x = x_next

        z[:d] = x
        z[d:] = u
        z_next[:d] = x_next
        z_next[d:] = u_next
        _fill_features(z, rows, cols, scale, phi)
        _fill_features(z_next, rows, cols, scale, phi_next)

        td_err = c - eta + (phi_next - phi) @ omega
        eta = eta + c_gamma / (1.0 + t) ** v * (c - eta)
        eta = min(max(eta, 0.0), eta_cap)
        if use_fixed_omega:
            omega = fixed_omega.copy()
        else:
            omega = omega + c_beta / (1.0 + t) ** v * td_err * phi
            nrm = np.sqrt(omega @ omega)
            if nrm > radius:
                omega = omega * (radius / nrm)

        for p in range(rows.size):
            val = omega[p] / scale[p]
            M[rows[p], cols[p]] = val
            M[cols[p], rows[p]] = val
        alpha = c_alpha / (1.0 + t) ** delta
        M22 = M[d:, d:].copy()
        K_next = K - alpha * (M22 @ K - M[d:, :d])

        steps = i + 1
        if not (np.all(np.isfinite(K_next)) and np.all(np.isfinite(omega)) and np.isfinite(eta)):
            status = NONFINITE
            break

        nrm = np.sqrt(omega @ omega)
        mon[0] = max(mon[0], nrm)
        mon[1] = min(mon[1], eta)
        mon[2] = max(mon[2], eta)
        if alpha > 0.0:
            bound = alpha * (np.linalg.norm(K, 2) + 1.0) * radius
            mon[3] = max(mon[3], np.linalg.norm(K_next - K, 2) / bound)

        K = K_next
        rho = _spectral_radius(A - B @ K)
        stable = rho < 1.0
        if not stable:
            violations += 1
            if abort_on_unstable:
                status = UNSTABLE
                break
    return status, steps, K, omega, eta, chain_x, violations, stable, rho


def gtd_inner_loop(
    A, B, Q, R, L0, sigma, K, x, noise, c_alpha,
    theta_radius, dual_radius, rows, cols, scale, mon,
):
    """Primal-dual gradient-TD along one trajectory of ``noise.shape[0] - 1`` updates.

    Returns the step-weighted averages ``(v1_hat, v2_hat)``; ``mon`` gets the
    largest primal and dual norms seen.
    """
    d = A.shape[0]
    k = B.shape[1]
    n = d + k
    m = rows.size
    v1 = 0.0
    v2 = np.zeros(m)
    w1 = 0.0
    w2 = np.zeros(m)
    acc = np.zeros(m)
    acc1 = 0.0
    alpha_sum = 0.0
    z = np.empty(n)
    phi = np.empty(m)
    phi_prev = np.empty(m)
    c_prev = 0.0
    for t in range(noise.shape[0]):
        nz = noise[t]
        u = -(K @ x) + sigma * nz[d:]
        c = x @ (Q @ x) + u @ (R @ u)
        z[:d] = x
        z[d:] = u
        _fill_features(z, rows, cols, scale, phi)
        x = A @ x + B @ u + L0 @ nz[:d]
        if t > 0:
            a = c_alpha / np.sqrt(1.0 + t)
            d_phi = phi_prev - phi
            td_err = v1 - c_prev + d_phi @ v2
            proj_w2 = phi_prev @ w2
            v1_new = v1 - a * (w1 + proj_w2)
            v2_new = v2 - a * d_phi * proj_w2
            w1 = (1.0 - a) * w1 + a * (v1 - c_prev)
            w2 = (1.0 - a) * w2 + a * td_err * phi_prev
            v1 = v1_new
            v2 = v2_new
            nrm = np.sqrt(v1 * v1 + v2 @ v2)
            if nrm > theta_radius:
                v1 = v1 * (theta_radius / nrm)
                v2 = v2 * (theta_radius / nrm)
            mon[0] = max(mon[0], min(nrm, theta_radius))
            nrm = np.sqrt(w1 * w1 + w2 @ w2)
            if nrm > dual_radius:
                w1 = w1 * (dual_radius / nrm)
                w2 = w2 * (dual_radius / nrm)
            mon[1] = max(mon[1], min(nrm, dual_radius))
            acc += a * v2
            acc1 += a * v1
            alpha_sum += a
        phi_prev[:] = phi
        c_prev = c
    return acc1 / alpha_sum, acc / alpha_sum


ac2t_steps_py = ac2t_steps
gtd_inner_loop_py = gtd_inner_loop
_fill_features = njit(cache=True)(_fill_features)
_spectral_radius = njit(cache=True)(_spectral_radius)
ac2t_steps = njit(cache=True)(ac2t_steps)
gtd_inner_loop = njit(cache=True)(gtd_inner_loop)
