"""Wind force fields, evaluated as pure functions of position and time."""

from dataclasses import dataclass, field

import numpy as np


def _vec(x):
    return np.asarray(x, dtype=float).reshape(3)


@dataclass
class ConstantWind:
    value: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.value = _vec(self.value)

    def force(self, p, t):
        return self.value.copy()

    def to_dict(self):
        return {"kind": "constant", "value": self.value.tolist()}


@dataclass
class SpatialSineWind:
    """base + amplitude * n_w @ sin(p - p0), switched on for t in [t_start, t_end)."""

    base: np.ndarray
    amplitude: float = -0.05
    p0: np.ndarray = field(default_factory=lambda: np.array([0.28, 4.0, 0.0]))
    n_w: np.ndarray = field(default_factory=lambda: np.diag([0.6, -0.7, 0.0]))
    t_start: float = -np.inf
    t_end: float = np.inf

    def __post_init__(self):
        self.base = _vec(self.base)
        self.p0 = _vec(self.p0)
        self.n_w = np.asarray(self.n_w, dtype=float).reshape(3, 3)
        self.amplitude = float(self.amplitude)

    def force(self, p, t):
        if self.t_start <= t < self.t_end:
            return self.base + self.amplitude * (self.n_w @ np.sin(_vec(p) - self.p0))
        return self.base.copy()

    def to_dict(self):
        d = {"kind": "spatial_sine", "base": self.base.tolist(), "amplitude": self.amplitude,
             "p0": self.p0.tolist(), "n_w": self.n_w.tolist()}
        if np.isfinite(self.t_start):
            d["t_start"] = float(self.t_start)
        if np.isfinite(self.t_end):
            d["t_end"] = float(self.t_end)
        return d


@dataclass
class GustWind:
    """Adds a fixed gust to a base field for t_start <= t <= t_end."""

    base: object
    gust: np.ndarray
    t_start: float
    t_end: float

    def __post_init__(self):
        self.gust = _vec(self.gust)
        if self.t_end < self.t_start:
            raise ValueError("gust window ends before it starts")

    def force(self, p, t):
        w = self.base.force(p, t)
        if self.t_start <= t <= self.t_end:
            w = w + self.gust
        return w

    def to_dict(self):
        return {"kind": "gust", "base": self.base.to_dict(), "gust": self.gust.tolist(),
                "t_start": float(self.t_start), "t_end": float(self.t_end)}


_FUNCS = {"sin": np.sin, "cos": np.cos}
_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class TrigWind:
    """Each axis is amp * func(coord - offset), e.g. 0.08 cos(y - 1)."""

    terms: list

    def __post_init__(self):
        if len(self.terms) != 3:
            raise ValueError("trig wind needs one term per axis")
        clean = []
        for amp, func, coord, offset in self.terms:
            if func not in _FUNCS:
                raise ValueError(f"unknown trig function {func!r}")
            if coord not in _AXES:
                raise ValueError(f"unknown coordinate {coord!r}")
            clean.append((float(amp), func, coord, float(offset)))
        self.terms = clean

    def force(self, p, t):
        p = _vec(p)
        return np.array([a * _FUNCS[f](p[_AXES[c]] - o) for a, f, c, o in self.terms])

    def to_dict(self):
        return {"kind": "trig", "terms": [list(term) for term in self.terms]}


def obstacle_course_wind():
    return TrigWind([(0.08, "cos", "y", 1.0), (0.08, "cos", "x", 0.0), (0.05, "sin", "z", 2.0)])


def zone_abc_wind(d_w=(-0.06, 0.06, 0.03), zone_b=(8.0, 14.0), gust=(0.2, 0.18, 0.1),
                  gust_window=(14.0, 14.2)):
    varying = SpatialSineWind(d_w, t_start=zone_b[0], t_end=zone_b[1])
    return GustWind(varying, gust, *gust_window)


def wind_from_dict(d):
    kind = d.get("kind")
    if kind == "constant":
        return ConstantWind(d.get("value", [0.0, 0.0, 0.0]))
    if kind == "spatial_sine":
        kw = {k: d[k] for k in ("amplitude", "p0", "n_w", "t_start", "t_end") if k in d}
        return SpatialSineWind(d["base"], **kw)
    if kind == "gust":
        return GustWind(wind_from_dict(d["base"]), d["gust"], d["t_start"], d["t_end"])
    if kind == "trig":
        return TrigWind([tuple(t) for t in d["terms"]])
    raise ValueError(f"unknown wind kind {kind!r}")


def wind_force_at(field, p, t):
    return field.force(p, t)
