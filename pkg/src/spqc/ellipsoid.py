"""Obstacles and sensing, plus a simplified IRIS inscribed-ellipsoid routine.

The ellipsoid is {C u + zeta : |u| <= 1} with C symmetric positive definite.
Construction alternates two steps, as IRIS does:

1. for every sensed obstacle, a separating plane tangent to the smallest
   scaled copy of the current ellipsoid that touches the obstacle;
2. a larger ellipsoid inside the resulting polytope, found by coordinate
   ascent over semi-axes and center in a fixed frame.

Step 1 keeps the current ellipsoid feasible for the new polytope, so volume
never decreases between rounds.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .qp import QPProblem, solve_qp


class SafetyFault(RuntimeError):
    pass


def _vec(x):
    return np.asarray(x, dtype=float).reshape(3)


@dataclass
class Sphere:
    center: np.ndarray
    radius: float
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    name: str = ""

    def __post_init__(self):
        self.center = _vec(self.center)
        self.velocity = _vec(self.velocity)
        self.radius = float(self.radius)
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")

    @property
    def dynamic(self):
        return bool(np.any(self.velocity != 0))

    def distance(self, p):
        """Signed distance from p to the surface (negative inside)."""
        return float(np.linalg.norm(_vec(p) - self.center) - self.radius)

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.sum((pts - self.center) ** 2, axis=1) < self.radius ** 2

    def inflated(self, delta):
        return Sphere(self.center, self.radius + delta, self.velocity, self.name)

    def moved(self, dt):
        return Sphere(self.center + self.velocity * dt, self.radius, self.velocity, self.name)

    def with_velocity(self, v):
        return Sphere(self.center, self.radius, v, self.name)

    def min_along(self, a):
        return float(a @ self.center - self.radius * np.linalg.norm(a))

    def metric_closest(self, M, zeta):
        """argmin (x - zeta)^T M (x - zeta) over the ball, zeta outside it."""
        w = zeta - self.center
        lam_M, Q = np.linalg.eigh(M)
        wq = Q.T @ w

        def offset(lam):
            return Q @ (lam_M * wq / (lam_M + lam))

        def gap(lam):
            return np.linalg.norm(offset(lam)) - self.radius

        if gap(0.0) <= 0:
            return zeta.copy()
        hi = lam_M.max() * np.linalg.norm(w) / self.radius
        while gap(hi) > 0:
            hi *= 2
        lam = brentq(gap, 0.0, hi, xtol=1e-14, rtol=1e-14, maxiter=200)
        d = offset(lam)
        return self.center + d * (self.radius / np.linalg.norm(d))

    def to_dict(self):
        d = {"shape": "sphere", "center": self.center.tolist(), "radius": self.radius}
        if self.dynamic:
            d["velocity"] = self.velocity.tolist()
        if self.name:
            d["name"] = self.name
        return d


@dataclass
class Box:
    lo: np.ndarray
    hi: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    name: str = ""

    def __post_init__(self):
        self.lo = _vec(self.lo)
        self.hi = _vec(self.hi)
        self.velocity = _vec(self.velocity)
        if np.any(self.lo >= self.hi):
            raise ValueError("box needs lo < hi on every axis")

    @property
    def dynamic(self):
        return bool(np.any(self.velocity != 0))

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def distance(self, p):
        p = _vec(p)
        outside = np.maximum(np.maximum(self.lo - p, p - self.hi), 0.0)
        if np.any(outside > 0):
            return float(np.linalg.norm(outside))
        return -float(np.min(np.minimum(p - self.lo, self.hi - p)))

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.all((pts > self.lo) & (pts < self.hi), axis=1)

    def inflated(self, delta):
        # the box grown by delta per face; a superset of the rounded Minkowski sum
        return Box(self.lo - delta, self.hi + delta, self.velocity, self.name)

    def moved(self, dt):
        s = self.velocity * dt
        return Box(self.lo + s, self.hi + s, self.velocity, self.name)

    def with_velocity(self, v):
        return Box(self.lo, self.hi, v, self.name)

    def min_along(self, a):
        return float(np.sum(np.minimum(a * self.lo, a * self.hi)))

    def metric_closest(self, M, zeta):
        prob = QPProblem(2 * M, -2 * M @ zeta, lb=self.lo, ub=self.hi)
        return solve_qp(prob, x0=np.clip(zeta, self.lo, self.hi)).x

    def to_dict(self):
        d = {"shape": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}
        if self.dynamic:
            d["velocity"] = self.velocity.tolist()
        if self.name:
            d["name"] = self.name
        return d


def obstacle_from_dict(d):
    shape = d.get("shape")
    v = d.get("velocity", [0.0, 0.0, 0.0])
    name = d.get("name", "")
    if shape == "sphere":
        return Sphere(d["center"], d["radius"], v, name)
    if shape == "box":
        return Box(d["lo"], d["hi"], v, name)
    raise ValueError(f"unknown obstacle shape {shape!r}")


def sense_obstacles(obstacles, p, s_r):
    if not s_r > 0:
        raise ValueError("sensing range must be positive")
    return [ob for ob in obstacles if ob.distance(p) <= s_r]


@dataclass
class SafeEllipsoid:
    C: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float).reshape(3, 3)
        self.zeta = _vec(self.zeta)
        self._Cinv = np.linalg.inv(self.C)

    @property
    def M(self):
        return self._Cinv.T @ self._Cinv

    @property
    def volume(self):
        return 4.0 / 3.0 * np.pi * abs(np.linalg.det(self.C))

    def normalized(self, x):
        """C^{-1}(x - zeta); inside the ellipsoid when its norm is < 1."""
        return self._Cinv @ (_vec(x) - self.zeta)

    def sample_interior(self, n, rng):
        u = rng.standard_normal((n, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        u *= rng.random((n, 1)) ** (1.0 / 3.0)
        return u @ self.C.T + self.zeta

    def sample_boundary(self, n, rng):
        u = rng.standard_normal((n, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return u @ self.C.T + self.zeta


def _frame(normal):
    """Right-handed orthonormal frame with the given first axis."""
    a = normal / np.linalg.norm(normal)
    ref = np.array([0.0, 0.0, 1.0]) if abs(a[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    b = ref - (ref @ a) * a
    b /= np.linalg.norm(b)
    return np.column_stack([a, b, np.cross(a, b)])


class _Ascent:
    """Axis-aligned (in frame Q) ellipsoids inside A x <= b keeping p central.

    Semi-axes s and center offsets t (zeta = p + Q t). Containment of the
    ellipsoid in a half-space a.x <= b is |diag(s) Q^T a| + a.zeta <= b.
    """

    def __init__(self, A, b, p, Q, kappa, axis=None, lift=0.0):
        self.A, self.b, self.p, self.Q, self.kappa = A, b, p, Q, kappa
        self.alpha = A @ Q  # alpha[i, j] = a_i . q_j
        self.slackp = b - A @ p
        # center lift along the axis: c . t >= lift
        self.c = np.zeros(3) if axis is None else Q.T @ axis
        self.lift = lift if axis is not None else 0.0

    def feasible(self, s, t, tol=1e-12):
        lhs = np.sqrt((self.alpha ** 2) @ (s ** 2)) + self.alpha @ t
        pos = np.sum((t / s) ** 2) <= self.kappa ** 2 * (1 + tol)
        up = self.c @ t >= self.lift - tol
        return bool(np.all(lhs <= self.slackp + tol) and pos and up)

    def best_s(self, j, s, t, tj):
        """Largest s_j for each center offset in tj along axis j, others fixed."""
        tj = np.atleast_1d(np.asarray(tj, dtype=float))
        others = [k for k in range(3) if k != j]
        R = (self.alpha[:, others] ** 2) @ (s[others] ** 2)
        base = self.slackp - self.alpha[:, others] @ t[others]
        room = base[None, :] - tj[:, None] * self.alpha[None, :, j]
        ok = np.all((room >= 0) & (room ** 2 >= R[None, :]), axis=1)
        aj = np.abs(self.alpha[:, j])
        act = aj > 1e-14
        cap = np.full(len(tj), np.inf)
        if np.any(act):
            gap = np.maximum(room[:, act] ** 2 - R[act][None, :], 0.0)
            cap = np.min(np.sqrt(gap) / aj[act][None, :], axis=1)
        # keep p inside: (tj/s_j)^2 <= kappa^2 - sum_others (t/s)^2
        budget = self.kappa ** 2 - np.sum((t[others] / s[others]) ** 2)
        if budget > 0:
            ok &= cap >= np.abs(tj) / np.sqrt(budget)
        else:
            ok &= tj == 0
        ok &= tj * self.c[j] + self.c[others] @ t[others] >= self.lift - 1e-12
        return np.where(ok, cap, 0.0)

    def improve_axis(self, j, s, t):
        """Grid-and-zoom search of the center offset along axis j."""
        lo_t, hi_t = self._t_range(j, s, t)
        cur = t[j]
        best_t, best = cur, float(self.best_s(j, s, t, cur)[0])
        lo, hi = lo_t, hi_t
        for _ in range(3):
            grid = np.linspace(lo, hi, 13)
            vals = self.best_s(j, s, t, grid)
            top = vals.max()
            if top > best * (1 + 1e-12):
                best = top
                near = vals >= top * (1 - 1e-12)
                # ties go to the offset nearest the current one (keeps symmetry)
                best_t = grid[near][np.argmin(np.abs(grid[near] - cur))]
            width = (hi - lo) / 6
            lo, hi = max(lo_t, best_t - width), min(hi_t, best_t + width)
        if best <= s[j]:
            return s, t
        s2, t2 = s.copy(), t.copy()
        # back off a hair so rounding never puts the surface past a plane
        s2[j], t2[j] = best * (1 - 1e-9), best_t
        if self.feasible(s2, t2):
            return s2, t2
        return s, t

    def _t_range(self, j, s, t):
        others = np.delete(np.arange(3), j)
        room = self.slackp - self.alpha[:, others] @ t[others]
        aj = self.alpha[:, j]
        lo, hi = -np.inf, np.inf
        for r, a in zip(room, aj):
            if a > 1e-14:
                hi = min(hi, r / a)
            elif a < -1e-14:
                lo = max(lo, r / a)
        cj = self.c[j]
        need = self.lift - self.c[others] @ t[others]
        if cj > 1e-14:
            lo = max(lo, need / cj)
        elif cj < -1e-14:
            hi = min(hi, need / cj)
        lo = max(lo, t[j] - 10 * s[j] - 1.0)
        hi = min(hi, t[j] + 10 * s[j] + 1.0)
        return min(lo, t[j]), max(hi, t[j])


def _inflate(ob, p, margin):
    # never inflate past the vehicle: keep half the current gap
    d = ob.distance(p)
    return ob.inflated(min(margin, 0.5 * d))


def _sweep(ob, horizon):
    """Cover a moving obstacle's path over the horizon."""
    if horizon <= 0 or not ob.dynamic:
        return ob
    s = ob.velocity * horizon
    if isinstance(ob, Sphere):
        return Sphere(ob.center + 0.5 * s, ob.radius + 0.5 * np.linalg.norm(s), ob.velocity, ob.name)
    return Box(np.minimum(ob.lo, ob.lo + s), np.maximum(ob.hi, ob.hi + s), ob.velocity, ob.name)


def compute_safe_ellipsoid(p, sensed, s_r=2.0, margin=0.1, kappa=0.5, max_iter=10,
                           sweep_horizon=0.0, history=None, rel_gain=0.01, axis=None, lift=0.0):
    """Obstacle-free ellipsoid around p inside the sensing cube.

    With nothing sensed the sensing ball is returned. Given a unit `axis`
    (the thrust axis) and `lift` > 0, the center is kept at least `lift`
    along the axis from p (capped by the free room), so h_R starts
    positive. `history`, when a list, receives the volume after each round.
    """
    p = _vec(p)
    if not sensed:
        ell = SafeEllipsoid(s_r * np.eye(3), p.copy())
        if history is not None:
            history.append(ell.volume)
        return ell
    for ob in sensed:
        if ob.distance(p) <= 0:
            raise SafetyFault("vehicle position inside an obstacle")

    obs = []
    for ob in sensed:
        swept = _sweep(ob, sweep_horizon)
        if swept.distance(p) <= 0:
            swept = ob
        obs.append(_inflate(swept, p, margin))

    cube_A = np.vstack([np.eye(3), -np.eye(3)])
    cube_b = np.concatenate([p + s_r, s_r - p])
    nearest = min(obs, key=lambda o: o.distance(p))
    x0 = nearest.metric_closest(np.eye(3), p)
    Q = _frame(x0 - p)

    r0 = min(o.distance(p) for o in obs)
    h = 0.0
    if axis is not None and lift > 0:
        axis = _vec(axis) / np.linalg.norm(axis)
        # the seed ball at p + h axis of radius r0 - h holds p when h <= kappa (r0 - h)
        h = min(lift, 0.9 * kappa * min(r0, s_r) / (1 + kappa))
    t = h * (Q.T @ axis) if h > 0 else np.zeros(3)
    s = np.full(3, (min(r0, s_r) - h) * (1 - 1e-6))
    C = Q @ np.diag(s) @ Q.T
    ell = SafeEllipsoid(C, p + Q @ t)
    if history is not None:
        history.append(ell.volume)

    for _ in range(max_iter):
        M, zeta = ell.M, ell.zeta
        closest = [o.metric_closest(M, zeta) for o in obs]
        dist = [float(np.linalg.norm(ell.normalized(x))) for x in closest]
        rows, rhs = [], []
        for k in np.argsort(dist, kind="stable"):
            o, x = obs[k], closest[k]
            if any(o.min_along(a) >= bb for a, bb in zip(rows, rhs)):
                continue
            a = M @ (x - zeta)
            a = a / np.linalg.norm(a)
            rows.append(a)
            rhs.append(float(a @ x))
        A = np.vstack([cube_A] + [np.array(rows)])
        b = np.concatenate([cube_b, rhs])
        asc = _Ascent(A, b, p, Q, kappa, axis if h > 0 else None, h * (1 - 1e-9))
        old = np.prod(s)
        if not asc.feasible(s, t, tol=1e-9):
            break
        for j in range(3):
            s, t = asc.improve_axis(j, s, t)
        ell = SafeEllipsoid(Q @ np.diag(s) @ Q.T, p + Q @ t)
        if history is not None:
            history.append(ell.volume)
        if np.prod(s) < old * (1 + rel_gain):
            break
    return ell
