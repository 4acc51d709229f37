"""Closed-loop scenario runner and metrics."""

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ControlInput, SimulationFault, State, VehicleParams, integrate_step, rotation_from_euler
from .ellipsoid import SafeEllipsoid, SafetyFault, Sphere, compute_safe_ellipsoid, sense_obstacles
from .gp import GPWindow, KernelParams, Observation, confidence_interval, gp_fit, residual_observe
from .safety import (BarrierGains, attitude_safety_row, filter_rates, filter_thrust,
                     h_attitude, h_position, position_safety_row)
from .tracking import (ReferencePoint, TrackingGains, attitude_stability_row, feedforward_thrust,
                       lmp_desired_attitude, lmp_nominal_propagation, position_stability_row,
                       solve_nominal_rates, solve_nominal_thrust)
from .wind import ConstantWind

VEHICLE_RADIUS = 0.05
ABLATIONS = ("spqc", "spqc-n")


@dataclass(frozen=True)
class Spiral:
    """p_d(t) = (R sin(w t), R - R cos(w t), c t), yaw 0."""

    radius: float = 2.0
    omega: float = 0.5
    climb: float = 0.2

    def __call__(self, t):
        R, w, c = self.radius, self.omega, self.climb
        s, co = np.sin(w * t), np.cos(w * t)
        return ReferencePoint(np.array([R * s, R - R * co, c * t]),
                              np.array([R * w * co, R * w * s, c]),
                              np.array([-R * w * w * s, R * w * w * co, 0.0]), 0.0)

    @property
    def speed(self):
        return float(np.hypot(self.radius * self.omega, self.climb))

    def to_dict(self):
        return {"kind": "spiral", "radius": self.radius, "omega": self.omega, "climb": self.climb}


def reference_spiral(t):
    if t < 0:
        raise ValueError("reference time must be nonnegative")
    return Spiral()(t)


@dataclass
class PathObstacle:
    """A sphere that travels the reference path backward (toward the vehicle).

    `tau` is the path parameter of its center; the center sits at
    p_d(tau) + offset and moves with arc-length speed `speed`. It enters
    the scene at `t_start` and is absent before then.
    """

    radius: float
    tau: float
    speed: float = 0.78
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t_start: float = 0.0
    name: str = ""

    def __post_init__(self):
        self.offset = np.asarray(self.offset, dtype=float).reshape(3)
        self.radius = float(self.radius)
        self.tau = float(self.tau)

    def active(self, t):
        return t >= self.t_start

    def shape(self, reference, t):
        ref = reference(self.tau)
        v = -self.speed * ref.v_d / np.linalg.norm(ref.v_d)
        return Sphere(ref.p_d + self.offset, self.radius, v, self.name)

    def advance(self, reference, t, dt):
        if t < self.t_start:
            return
        rate = self.speed / np.linalg.norm(reference(self.tau).v_d)
        self.tau -= rate * dt

    def to_dict(self):
        d = {"shape": "path_sphere", "radius": self.radius, "tau": self.tau, "speed": self.speed,
             "offset": self.offset.tolist(), "t_start": self.t_start}
        if self.name:
            d["name"] = self.name
        return d


def advance_obstacles(obstacles, dt, reference=None, t=0.0):
    """Move every dynamic obstacle by one step; static ones are returned as is."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    out = []
    for ob in obstacles:
        if isinstance(ob, PathObstacle):
            ob.advance(reference, t, dt)
            out.append(ob)
        elif ob.dynamic:
            out.append(ob.moved(dt))
        else:
            out.append(ob)
    return out


def obstacle_shapes(obstacles, reference, t):
    """Obstacles present at time t, as plain shapes."""
    out = []
    for ob in obstacles:
        if isinstance(ob, PathObstacle):
            if ob.active(t):
                out.append(ob.shape(reference, t))
        else:
            out.append(ob)
    return out


@dataclass
class EllipsoidSettings:
    margin: float = 0.1
    kappa: float = 0.5
    max_iter: int = 10
    sweep_horizon: float = 0.0
    lift: float = 0.1


@dataclass
class Scenario:
    duration: float = 20.0
    control_rate: float = 50.0
    initial: State = field(default_factory=lambda: State(np.zeros(3), np.zeros(3), np.zeros(3)))
    wind: object = field(default_factory=ConstantWind)
    obstacles: list = field(default_factory=list)
    reference: Spiral = field(default_factory=Spiral)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    tracking: TrackingGains = field(default_factory=TrackingGains)
    barrier: BarrierGains = field(default_factory=BarrierGains)
    kernel: KernelParams = field(default_factory=KernelParams)
    ellipsoid: EllipsoidSettings = field(default_factory=EllipsoidSettings)
    c_delta: float = 3.0
    window: int = 20
    residual_noise: float = 1e-3
    ablation: str = "spqc"
    zone_windows: list = field(default_factory=lambda: [("A", 0.0, 8.0), ("B", 8.0, 14.0), ("C", 14.0, 20.0)])
    rng_seed: int = 0
    name: str = ""

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not self.control_rate > 0:
            raise ValueError("control_rate must be positive")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")
        zones = sorted(self.zone_windows, key=lambda z: z[1])
        for (_, a0, a1), (_, b0, _) in zip(zones, zones[1:]):
            if b0 < a1:
                raise ValueError("zone windows overlap")
        for label, t0, t1 in zones:
            if t1 <= t0:
                raise ValueError(f"zone {label} is empty")

    @property
    def dt(self):
        return 1.0 / self.control_rate

    @property
    def steps(self):
        return int(round(self.duration * self.control_rate))


class SimLog:
    """Per-step records held as columns; every name maps to a list."""

    def __init__(self):
        self.columns = {}
        self.status = "ok"
        self.message = ""

    def append(self, **values):
        for k, v in values.items():
            self.columns.setdefault(k, []).append(v)

    def __len__(self):
        return len(self.columns.get("t", []))

    def array(self, name):
        return np.asarray(self.columns[name], dtype=float)


@dataclass
class StepResult:
    u: ControlInput
    diag: dict


class SPQCController:
    """One control step of the cascaded pipeline.

    sense, ellipsoid, GP predict, nominal thrust, position filter, local
    motion planning, nominal rates, attitude filter.
    """

    def __init__(self, scenario):
        self.sc = scenario
        self.omega_d = np.zeros(3)

    def step(self, state, t, model, shapes):
        sc = self.sc
        P, tg, bg = sc.vehicle, sc.tracking, sc.barrier
        dt = sc.dt
        sensed = sense_obstacles(shapes, state.p, P.s_r)
        es = sc.ellipsoid
        b3 = rotation_from_euler(state.omega_euler)[:, 2]
        ell = compute_safe_ellipsoid(state.p, sensed, P.s_r, es.margin, es.kappa, es.max_iter,
                                     es.sweep_horizon, axis=b3, lift=es.lift)
        if sc.ablation == "spqc-n":
            mu, sigma = np.zeros(3), np.zeros(3)
        else:
            mu, sigma = model.predict(state.p)

        ref = sc.reference(t)
        row_p = position_stability_row(state, ref, mu, sigma, sc.c_delta, tg, P)
        F_n, beta = solve_nominal_thrust(row_p, P.F_max, tg, feedforward_thrust(ref, mu, P))
        srow_p = position_safety_row(state, ell, mu, sigma, sc.c_delta, bg, P)
        F, eta = filter_thrust(F_n, srow_p, (0.0, P.F_max), bg)

        T = tg.lmp_horizon
        p_t, v_t = lmp_nominal_propagation(state, F, mu, dt, P)
        mu_p = mu / P.m * T ** 2 / 2
        mu_v = mu / P.m * T
        self.omega_d = lmp_desired_attitude(p_t, v_t, sc.reference(t + dt + T), mu_p, mu_v, T, tg,
                                            P.g_vec, self.omega_d)
        row_a = attitude_stability_row(state, self.omega_d, mu, sigma, sc.c_delta, tg)
        w_n, gamma = solve_nominal_rates(row_a, P.omega_max, tg)
        srow_a = attitude_safety_row(state, ell, bg)
        w, eps = filter_rates(w_n, srow_a, P.omega_max, bg)

        R = rotation_from_euler(state.omega_euler)
        diag = dict(ref=ref, F_n=F_n, w_n=w_n, F=F, w=w, beta=beta, gamma=gamma, eta=eta, eps=eps,
                    mu=mu, sigma=sigma, ell=ell, sensed=len(sensed), omega_d=self.omega_d.copy(),
                    h_p=h_position(ell, state.p), h_R=h_attitude(ell, state.p, R),
                    srow_p_nominal=srow_p.value([F_n]), srow_a_nominal=srow_a.value(w_n))
        return StepResult(ControlInput(F, w), diag)


def spqc_step(state, t, scenario, model, shapes, controller=None):
    controller = controller or SPQCController(scenario)
    res = controller.step(state, t, model, shapes)
    return res.u, res.diag


def _clearance(shapes, p):
    if not shapes:
        return np.inf
    return min(ob.distance(p) for ob in shapes)


def run_simulation(scenario):
    """Run the closed loop; faults truncate the log and set its status."""
    sc = scenario
    dt, P = sc.dt, sc.vehicle
    rng = np.random.default_rng(sc.rng_seed)
    obstacles = [ob if not isinstance(ob, PathObstacle) else PathObstacle(**_path_kwargs(ob))
                 for ob in sc.obstacles]
    window = GPWindow(sc.window)
    ctrl = SPQCController(sc)
    log = SimLog()
    state = sc.initial.copy()
    prev = None
    for k in range(sc.steps):
        t = k * dt
        if prev is not None:
            obs = residual_observe(prev[0], state, prev[1], dt, P)
            noise = rng.normal(0.0, sc.residual_noise, 3) if sc.residual_noise > 0 else np.zeros(3)
            window.push(Observation(obs.q_in, obs.d_hat + noise))
        model = gp_fit(window, sc.kernel)
        shapes = obstacle_shapes(obstacles, sc.reference, t)
        try:
            res = ctrl.step(state, t, model, shapes)
        except SafetyFault as exc:
            _fault(log, "safety_fault", str(exc))
            break
        d = res.diag
        ell = d["ell"]
        wind = sc.wind.force(state.p, t)
        ref = d["ref"]
        log.append(t=t, p=state.p.copy(), v=state.v.copy(), euler=state.omega_euler.copy(),
                   p_d=ref.p_d, v_d=ref.v_d, a_d=ref.a_d, psi_d=ref.psi_d, omega_d=d["omega_d"],
                   F_n=d["F_n"], w_n=d["w_n"], F=d["F"], w=d["w"], h_p=d["h_p"], h_R=d["h_R"],
                   beta=d["beta"], gamma=d["gamma"], eta=d["eta"], eps=d["eps"], mu=d["mu"],
                   sigma=d["sigma"], wind=wind, C=ell.C.reshape(-1), zeta=ell.zeta, sensed=d["sensed"],
                   srow_p_nominal=d["srow_p_nominal"], srow_a_nominal=d["srow_a_nominal"],
                   clearance=_clearance(shapes, state.p), gp_count=len(window), outcome="ok")
        try:
            nxt = integrate_step(state, res.u, sc.wind, t, dt, P)
        except SimulationFault as exc:
            _fault(log, "simulation_fault", str(exc))
            break
        prev = (state, res.u)
        state = nxt
        obstacles = advance_obstacles(obstacles, dt, sc.reference, t)
        after = obstacle_shapes(obstacles, sc.reference, t + dt)
        hit = [ob for ob in after if ob.distance(state.p) < VEHICLE_RADIUS]
        if hit:
            name = hit[0].name or type(hit[0]).__name__
            _fault(log, "collision", f"collision at t={t + dt:.2f} s with {name}")
            break
    return log


def _fault(log, status, message):
    # the last logged step carries the terminal outcome
    log.status, log.message = status, message
    if len(log):
        log.columns["outcome"][-1] = status


def _path_kwargs(ob):
    return dict(radius=ob.radius, tau=ob.tau, speed=ob.speed, offset=ob.offset.copy(),
                t_start=ob.t_start, name=ob.name)


@dataclass
class Metrics:
    rmse_per_zone: dict
    min_clearance: float
    interval_coverage: float
    collision_count: int
    max_slack: dict
    steps: int = 0
    status: str = "ok"

    def to_dict(self):
        return {"rmse_per_zone": dict(self.rmse_per_zone), "min_clearance": self.min_clearance,
                "interval_coverage": self.interval_coverage, "collision_count": self.collision_count,
                "max_slack": dict(self.max_slack), "steps": self.steps, "status": self.status}


def compute_metrics(log, zone_windows, c_delta=3.0, warmup=1.0):
    """Zone RMSE, confidence-interval coverage after warmup, clearance, slacks."""
    cols = log.columns if isinstance(log, SimLog) else log
    outcomes = cols.get("outcome") or ["ok"]
    status = log.status if isinstance(log, SimLog) else outcomes[-1]
    t = np.asarray(cols.get("t", []), dtype=float)
    if len(t) == 0:
        raise ValueError("empty log")
    err = np.linalg.norm(np.asarray(cols["p"], float) - np.asarray(cols["p_d"], float), axis=1)
    rmse = {}
    last = len(zone_windows) - 1
    for i, (label, t0, t1) in enumerate(zone_windows):
        # the final window is closed on the right
        sel = (t >= t0) & ((t <= t1) if i == last else (t < t1))
        rmse[label] = float(np.sqrt(np.mean(err[sel] ** 2))) if np.any(sel) else float("nan")
    mu = np.asarray(cols["mu"], float)
    sig = np.asarray(cols["sigma"], float)
    wind = np.asarray(cols["wind"], float)
    ci = confidence_interval(mu, sig, c_delta)
    inside = np.all((wind >= ci.lower) & (wind <= ci.upper), axis=1)
    after = t >= warmup
    coverage = float(np.mean(inside[after])) if np.any(after) else float("nan")
    clearance = np.asarray(cols["clearance"], float)
    slacks = {k: float(np.max(np.asarray(cols[k], float))) for k in ("beta", "gamma", "eta", "eps")}
    return Metrics(rmse, float(np.min(clearance)), coverage, int(status == "collision"), slacks,
                   len(t), status)
