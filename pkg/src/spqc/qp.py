"""Small dense convex quadratic programs.

Problems have the form::

    minimize    0.5 x^T H x + f^T x
    subject to  A x <= b
                lb <= x <= ub

with H symmetric positive semidefinite. They are tiny (a handful of variables
and rows), so everything is dense numpy. `solve_qp` is a primal active-set
method; `kkt_enumerate_oracle` enumerates active sets exhaustively and exists
to check it.

The controller QPs carry slack variables with penalties of 1e20..1e30 next to
O(1) weights, so numerics matter more than the problem sizes suggest. Phase
two runs on unit-diagonal scaled variables and uses Householder QR (never a
rank-truncating least squares) for null spaces and multipliers; the graded
columns this produces are exact data and must not be thresholded away.
"""
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.linalg import solve_triangular

FEAS_TOL = 1e-8
PSD_FLOOR = -1e-10

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"


class QPError(RuntimeError):
    """Raised when a problem is malformed, unbounded, or the solver stalls."""


@dataclass
class QPProblem:
    H: np.ndarray
    f: np.ndarray
    A: np.ndarray = None
    b: np.ndarray = None
    lb: np.ndarray = None
    ub: np.ndarray = None

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float).reshape(-1)
        n = self.f.size
        self.H = np.asarray(self.H, dtype=float).reshape(n, n)
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-12 * max(1.0, np.abs(self.H).max(initial=0.0)):
            raise ValueError("H is not symmetric")
        self.H = 0.5 * (self.H + self.H.T)
        if self.A is None:
            self.A = np.zeros((0, n))
            self.b = np.zeros(0)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.b.size != self.A.shape[0]:
            raise ValueError("A and b have inconsistent row counts")
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(n)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(n)
        if np.any(self.lb > self.ub):
            raise ValueError("lb > ub")

    @property
    def n(self):
        return self.f.size

    def objective(self, x):
        return float(0.5 * x @ self.H @ x + self.f @ x)

    def constraint_rows(self):
        """All constraints as ``G x <= h``: general rows, then lb/ub per variable."""
        rows = [self.A]
        rhs = [self.b]
        eye = np.eye(self.n)
        for i in range(self.n):
            if np.isfinite(self.lb[i]):
                rows.append(-eye[i:i + 1])
                rhs.append([-self.lb[i]])
            if np.isfinite(self.ub[i]):
                rows.append(eye[i:i + 1])
                rhs.append([self.ub[i]])
        return np.vstack(rows), np.concatenate([np.asarray(r, dtype=float) for r in rhs])

    def max_violation(self, x):
        G, h = self.constraint_rows()
        if G.shape[0] == 0:
            return 0.0
        return float(max(0.0, np.max(G @ x - h)))


@dataclass
class QPSolution:
    x: np.ndarray
    objective: float
    status: str
    active: tuple = field(default_factory=tuple)
    iterations: int = 0

    @property
    def ok(self):
        return self.status == OPTIMAL


def _infeasible(n):
    return QPSolution(np.full(n, np.nan), np.inf, INFEASIBLE)


def _variable_scaling(H):
    d = np.diag(H)
    scale = np.ones_like(d)
    pos = d > 0
    scale[pos] = 1.0 / np.sqrt(d[pos])
    return scale


def _unit_rows(G, h):
    norms = np.linalg.norm(G, axis=1)
    keep = norms > 0
    if np.any(h[~keep] < -FEAS_TOL):
        return None
    return G[keep] / norms[keep, None], h[keep] / norms[keep], keep


def _null_basis(Gw, n):
    """Orthonormal basis of {d : Gw d = 0} for full-row-rank Gw, via QR."""
    k = Gw.shape[0]
    if k == 0:
        return np.eye(n)
    # coordinates no working row touches are exact null directions; keeping
    # them out of the QR stops rounding in nearly parallel rows (graded slack
    # columns) from leaking into them
    support = np.flatnonzero(np.any(Gw != 0, axis=0))
    free = np.setdiff1d(np.arange(n), support)
    Q, _ = np.linalg.qr(Gw[:, support].T, mode="complete")
    Z = np.zeros((n, n - k))
    Z[free, :len(free)] = np.eye(len(free))
    Z[np.ix_(support, np.arange(len(free), n - k))] = Q[:, k:]
    return Z


def _multipliers(Gw, r):
    """Solve Gw^T lam = r in the least-squares sense without rank truncation."""
    Q, R = np.linalg.qr(Gw.T)
    return solve_triangular(R, Q.T @ r)


def _flat_basis(H):
    w, V = np.linalg.eigh(H)
    return V[:, w <= 1e-10]


def _step(H, g, Gw, flat):
    """Minimizer step of 0.5 d'Hd + g'd over {Gw d = 0}.

    Returns (d, bounded). If a zero-curvature direction with nonzero slope
    exists, d is that descent ray and bounded is False.
    """
    n = g.size
    Z = _null_basis(Gw, n)
    if Z.shape[1] == 0:
        return np.zeros(n), True
    if Gw.shape[0]:
        # Z^T Gw^T = 0, so removing the range-space part leaves Z^T g unchanged
        # in exact arithmetic while shrinking what rounding in Z multiplies
        g = g - Gw.T @ _multipliers(Gw, g)
    if flat.shape[1]:
        # zero-curvature directions inside null(Gw): null(Gw) ∩ null(H)
        proj = flat.T @ Z
        _, s, vt = np.linalg.svd(proj)
        rank = int(np.sum(s > 1.0 - 1e-9))
        if rank:
            F = Z @ vt[:rank].T
            slope = F.T @ g
            if np.linalg.norm(slope) > 1e-12 * (1.0 + np.abs(g).max()):
                return -F @ slope, False
            Z = Z @ vt[rank:].T
            if Z.shape[1] == 0:
                return np.zeros(n), True
    dz = -np.linalg.solve(Z.T @ H @ Z, Z.T @ g)
    return Z @ dz, True


def _active_set(H, f, G, h, x, working, max_iter):
    """Primal active-set iterations from a feasible `x`.

    `working` must index linearly independent rows of G that are tight at x.
    Blocking rows enter one at a time (lowest index on ties), which keeps the
    working set independent without any rank test.
    """
    n = x.size
    working = list(working)
    flat = _flat_basis(H)
    at_minimum = False
    for it in range(max_iter):
        g = H @ x + f
        if not at_minimum:
            d, bounded = _step(H, g, G[working], flat)
            if bounded and np.abs(d).max(initial=0.0) == 0.0:
                at_minimum = True
        if at_minimum:
            if not working:
                return x, working, it
            lam = _multipliers(G[working], -g)
            j = int(np.argmin(lam))
            if lam[j] >= -1e-12 * max(1.0, np.abs(g).max()):
                return x, working, it
            working.pop(j)
            at_minimum = False
            continue
        Gd = G @ d
        alpha = 1.0 if bounded else np.inf
        block = -1
        # componentwise scale: steps are graded when slack variables move
        mask = Gd > 1e-13 * (np.abs(G) @ np.abs(d))
        mask[working] = False
        if mask.any():
            idx = np.flatnonzero(mask)
            with np.errstate(over="ignore"):
                # an overflowing ratio is a row that never blocks
                ratios = np.maximum(h[idx] - G[idx] @ x, 0.0) / Gd[idx]
            rmin = ratios.min()
            if rmin < alpha:
                alpha = rmin
                block = int(idx[np.flatnonzero(ratios <= rmin * (1 + 1e-12))[0]])
        if not np.isfinite(alpha):
            raise QPError("QP is unbounded below")
        x = x + alpha * d
        if block >= 0:
            working.append(block)
        else:
            at_minimum = True
    raise QPError(f"active-set iteration limit ({max_iter}) reached")


def _feasible_start(G, h, n, box_rows, max_iter):
    """Phase one: a point satisfying unit-norm rows G x <= h, or None.

    Box rows are met by clipping; remaining violation is removed by
    minimizing a shared elastic variable s >= 0 with the same active-set
    iteration (a linear program here).
    """
    x0 = np.zeros(n)
    viol = G @ x0 - h
    for i in box_rows:
        if viol[i] > 0:
            j = int(np.flatnonzero(G[i])[0])
            x0[j] = h[i] / G[i, j]
    viol = G @ x0 - h
    if G.shape[0] == 0 or viol.max() <= 0:
        return x0
    G1 = np.hstack([G, -np.ones((G.shape[0], 1))])
    G1[box_rows, -1] = 0.0
    G1 = np.vstack([G1, -np.eye(1, n + 1, n)])
    h1 = np.concatenate([h, [0.0]])
    G1, h1, _ = _unit_rows(G1, h1)
    f1 = np.zeros(n + 1)
    f1[-1] = 1.0
    z = np.concatenate([x0, [viol.max()]])
    z, _, _ = _active_set(np.zeros((n + 1, n + 1)), f1, G1, h1, z, [], max_iter)
    if z[-1] > FEAS_TOL:
        return None
    return z[:n]


def solve_qp(problem, max_iter=None, x0=None):
    """Solve a small dense convex QP.

    Returns a `QPSolution` with status ``"optimal"`` or ``"infeasible"``.
    Deterministic: identical problems give bit-identical results.
    A feasible `x0` skips phase one; an infeasible hint is ignored.
    """
    n = problem.n
    max_iter = max_iter or 50 * (problem.A.shape[0] + 3 * n + 1)
    if n:
        w = np.linalg.eigvalsh(problem.H)
        if w.min() < PSD_FLOOR:
            raise QPError(f"H is not positive semidefinite (min eigenvalue {w.min():.3g})")
    G, h = problem.constraint_rows()
    rows = _unit_rows(G, h)
    if rows is None:
        return _infeasible(n)
    G, h, keep = rows
    box_rows = np.flatnonzero(np.flatnonzero(keep) >= problem.A.shape[0])
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if G.shape[0] and np.max(G @ x0 - h) > 0:
            x0 = None
    if x0 is None:
        x0 = _feasible_start(G, h, n, box_rows, max_iter)
    if x0 is None:
        return _infeasible(n)

    D = _variable_scaling(problem.H)
    Hs = problem.H * np.outer(D, D)
    Gs, hs, _ = _unit_rows(G * D, h)
    y, working, iters = _active_set(Hs, problem.f * D, Gs, hs, x0 / D, [], max_iter)
    x = np.minimum(np.maximum(D * y, problem.lb), problem.ub)
    return QPSolution(x, problem.objective(x), OPTIMAL, tuple(sorted(working)), iters)


def _exact_solve(K, rhs):
    import mpmath

    with mpmath.workdps(60):
        sol = mpmath.lu_solve(mpmath.matrix(K.tolist()), mpmath.matrix(rhs.tolist()))
        return np.array([float(v) for v in sol])


def _kkt_solve(K, rhs):
    try:
        sol = np.linalg.solve(K, rhs)
        if np.all(np.isfinite(sol)):
            # componentwise backward error, so small rows are judged on their own scale
            bound = 1e-12 * (np.abs(K) @ np.abs(sol) + np.abs(rhs))
            if np.all(np.abs(K @ sol - rhs) <= bound):
                return sol
    except np.linalg.LinAlgError:
        pass
    # graded systems (1e30 penalties beside unit weights) defeat double LU
    try:
        return _exact_solve(K, rhs)
    except ZeroDivisionError:
        return None


def kkt_enumerate_oracle(problem, tol=1e-9):
    """Exact optimum by enumerating every candidate active set.

    For each subset of at most n constraint rows, solve the equality
    constrained KKT system and keep candidates that are primal feasible with
    nonnegative multipliers; the cheapest survivor wins. Exponential in the
    row count, so test use only.
    """
    n = problem.n
    G, h = problem.constraint_rows()
    m = G.shape[0]
    if m > 20:
        raise ValueError("too many constraints to enumerate")
    norms = np.linalg.norm(G, axis=1)
    norms[norms == 0] = 1.0
    Gn, hn = G / norms[:, None], h / norms
    best = None
    for k in range(min(n, m) + 1):
        for S in combinations(range(m), k):
            S = list(S)
            if k and np.linalg.matrix_rank(Gn[S]) < k:
                continue
            K = np.block([[problem.H, Gn[S].T], [Gn[S], np.zeros((k, k))]])
            sol = _kkt_solve(K, np.concatenate([-problem.f, hn[S]]))
            if sol is None:
                continue
            x, lam = sol[:n], sol[n:]
            if m and np.any(G @ x - h > tol * (1.0 + np.abs(h))):
                continue
            if k and np.any(lam < -tol * max(1.0, np.abs(lam).max())):
                continue
            obj = problem.objective(x)
            if best is None or obj < best[1] - 1e-14 * max(1.0, abs(obj)):
                best = (x, obj, tuple(S))
    if best is None:
        return _infeasible(n)
    return QPSolution(best[0], best[1], OPTIMAL, best[2])
