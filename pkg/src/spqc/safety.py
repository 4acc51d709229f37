"""Barrier functions on the safe ellipsoid and the two minimal-modification filters."""

from dataclasses import dataclass

import numpy as np

from .dynamics import rotation_from_euler, thrust_axis
from .qp import QPError, QPProblem, solve_qp


@dataclass
class BarrierGains:
    alpha1a: float = 3.0
    alpha1b: float = 3.0
    alpha2: float = 10.0
    K_eta: float = 1e30
    K_epsilon: float = 1e30

    def __post_init__(self):
        for name in ("alpha1a", "alpha1b", "alpha2", "K_eta", "K_epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class SafetyRow:
    """coeff . u + rhs_const + slack_coeff * slack >= 0."""

    coeff: np.ndarray
    rhs_const: float
    slack_coeff: float = 1.0

    def value(self, u):
        """Row value at u with zero slack; >= 0 means satisfied."""
        return float(np.dot(self.coeff, u) + self.rhs_const)


def h_position(ell, p):
    d = np.asarray(p, dtype=float) - ell.zeta
    return float(1.0 - d @ ell.M @ d)


def h_attitude(ell, p, R):
    r = ell.zeta - np.asarray(p, dtype=float)
    return float(r @ R[:, 2])


def position_safety_row(state, ell, mu, sigma, c_delta, gains, params):
    """Exponential CBF on h_p, which has relative degree two in F.

    psi1 = h_dot + a1a h; the row enforces psi1_dot + a1b psi1 >= -eta with
    h_dot = -2 d^T M v and d = p - zeta.
    """
    M = ell.M
    d = state.p - ell.zeta
    h = 1.0 - d @ M @ d
    h_dot = -2.0 * d @ M @ state.v
    psi1 = h_dot + gains.alpha1a * h
    dM = d @ M
    m = params.m
    coeff = -2.0 * dM @ thrust_axis(state.omega_euler) / m
    drift = -2.0 * state.v @ M @ state.v - 2.0 * dM @ params.g_vec + gains.alpha1a * h_dot
    L_mu = -2.0 * dM @ np.asarray(mu) / m
    L_sig = 2.0 * c_delta / m * np.abs(dM) @ np.asarray(sigma)
    return SafetyRow(np.array([coeff]), drift + L_mu - L_sig + gains.alpha1b * psi1)


def attitude_safety_row(state, ell, gains):
    """h_R = r . R e3 with r = zeta - p; R_dot = R S(omega).

    h_R_dot = -v . R e3 + (R^T r) . (omega x e3), and omega x e3 =
    (omega_y, -omega_x, 0), so the rate coefficient is (-s_y, s_x, 0) with
    s = R^T r. Wind enters only the velocity equation, so the GP slots of
    this row are identically zero.
    """
    R = rotation_from_euler(state.omega_euler)
    r = ell.zeta - state.p
    s = R.T @ r
    b3 = R[:, 2]
    h = r @ b3
    coeff = np.array([-s[1], s[0], 0.0])
    L_mu = 0.0
    L_sig = 0.0
    return SafetyRow(coeff, -state.v @ b3 + L_mu - L_sig + gains.alpha2 * h)


def _filter(u_n, row, lb, ub, K):
    """min |u - u_n|^2 + K slack^2 subject to the row and the box."""
    u_n = np.asarray(u_n, dtype=float)
    n = len(u_n)
    H = 2.0 * np.eye(n + 1)
    H[n, n] = 2.0 * K
    f = np.append(-2.0 * u_n, 0.0)
    A = -np.append(row.coeff, row.slack_coeff)[None, :]
    lo = np.append(lb, 0.0)
    hi = np.append(ub, np.inf)
    u0 = np.minimum(np.maximum(u_n, lb), ub)
    start = np.append(u0, max(0.0, -row.value(u0)))
    # when the nominal already satisfies its box and row, it is the answer
    if np.all(u0 == u_n) and start[n] == 0.0:
        return u_n.copy(), 0.0
    sol = solve_qp(QPProblem(H, f, A, [row.rhs_const], lo, hi), x0=start)
    if not sol.ok:
        raise QPError("safety filter QP infeasible")
    return sol.x[:n].copy(), float(sol.x[n])


def filter_thrust(F_n_star, row, F_bounds, gains):
    u, eta = _filter([F_n_star], row, [F_bounds[0]], [F_bounds[1]], gains.K_eta)
    return float(u[0]), eta


def filter_rates(omega_n_star, row, omega_max, gains):
    lb = np.full(3, -omega_max)
    return _filter(omega_n_star, row, lb, -lb, gains.K_epsilon)
