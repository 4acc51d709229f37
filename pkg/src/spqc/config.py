"""TOML scenario files: parsing with keyed errors, and the resolved echo.

Layout (all sections optional except the required keys):

    name, duration*, control_rate*, rng_seed, ablation, compare,
    c_delta, window, residual_noise
    [wind]*            kind = constant | spatial_sine | gust | trig
    [initial]          p, v, euler
    [vehicle]          m, F_max, omega_max, s_r, g
    [reference]        kind = spiral; radius, omega, climb
    [tracking] [barrier] [kernel] [ellipsoid]
    [[zones]]          label, t_start, t_end
    [[obstacles]]      shape = sphere | box | path_sphere

Keys marked * are required. Defaults are the dataclass defaults of each
module.
"""

import re
from dataclasses import fields

import numpy as np
try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli
import tomli_w

from .dynamics import State, VehicleParams
from .ellipsoid import Box, Sphere
from .gp import KernelParams
from .safety import BarrierGains
from .sim import ABLATIONS, EllipsoidSettings, PathObstacle, Scenario, Spiral
from .tracking import THRUST_COSTS, TrackingGains
from .wind import ConstantWind, GustWind, SpatialSineWind, TrigWind

REQUIRED = ("duration", "control_rate", "wind")


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None):
        where = ""
        if key:
            where = f"{key}"
            if line:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)
        self.key, self.line = key, line


# value kinds: (checker, converter)

def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _float(x):
    if not _is_num(x):
        raise TypeError("expected a number")
    return float(x)


def _int(x):
    if not isinstance(x, int) or isinstance(x, bool):
        raise TypeError("expected an integer")
    return x


def _bool(x):
    if not isinstance(x, bool):
        raise TypeError("expected true or false")
    return x


def _str(x):
    if not isinstance(x, str):
        raise TypeError("expected a string")
    return x


def _vec3(x):
    if not isinstance(x, list) or len(x) != 3 or not all(_is_num(v) for v in x):
        raise TypeError("expected an array of 3 numbers")
    return [float(v) for v in x]


def _mat3(x):
    if not isinstance(x, list) or len(x) != 3:
        raise TypeError("expected a 3x3 array")
    return [_vec3(row) for row in x]


def _choice(options):
    def conv(x):
        _str(x)
        if x not in options:
            raise ValueError(f"must be one of {list(options)}")
        return x
    return conv


def _positive(x):
    if not x > 0:
        raise ValueError("must be positive")


def _nonneg(x):
    if not x >= 0:
        raise ValueError("must be nonnegative")


# section schemas: key -> (converter, range check or None)
_VEHICLE = {"m": (_float, _positive), "F_max": (_float, _positive),
            "omega_max": (_float, _positive), "s_r": (_float, _positive), "g": (_vec3, None)}
_INITIAL = {"p": (_vec3, None), "v": (_vec3, None), "euler": (_vec3, None)}
_REFERENCE = {"kind": (_choice(("spiral",)), None), "radius": (_float, _nonneg),
              "omega": (_float, None), "climb": (_float, None)}
_TRACKING = {"lambda1": (_float, _positive), "lambda2": (_float, _positive),
             "lambda_c": (_float, _nonneg), "c_p": (_float, _positive),
             "lambda3": (_float, None), "lambda4": (_float, _positive), "c_a": (_float, _positive),
             "H1": (_float, _positive), "H2": (_mat3, None), "K_beta": (_float, _positive),
             "K_gamma": (_float, _positive), "thrust_cost": (_choice(THRUST_COSTS), None),
             "max_tilt": (_float, _positive), "lmp_horizon": (_float, _positive)}
_BARRIER = {k: (_float, _positive) for k in ("alpha1a", "alpha1b", "alpha2", "K_eta", "K_epsilon")}
_KERNEL = {"sigma_f": (_float, _positive), "L": (_float, _positive),
           "sigma_n": (_float, _positive), "linear": (_bool, None), "sigma_l": (_float, _nonneg)}
_ELLIPSOID = {"margin": (_float, _nonneg), "kappa": (_float, _positive),
              "max_iter": (_int, _positive), "sweep_horizon": (_float, _nonneg),
              "lift": (_float, _nonneg)}
_ZONE = {"label": (_str, None), "t_start": (_float, None), "t_end": (_float, None)}
_TOP = {"name": (_str, None), "duration": (_float, _positive), "control_rate": (_float, _positive),
        "rng_seed": (_int, _nonneg), "ablation": (_choice(ABLATIONS), None),
        "c_delta": (_float, _positive), "window": (_int, _positive),
        "residual_noise": (_float, _nonneg)}
_TABLES = ("wind", "initial", "vehicle", "reference", "tracking", "barrier", "kernel", "ellipsoid")
_ARRAYS = ("zones", "obstacles")

_WIND = {
    "constant": {"kind": None, "value": (_vec3, None)},
    "spatial_sine": {"kind": None, "base": (_vec3, None), "amplitude": (_float, None),
                     "p0": (_vec3, None), "n_w": (_mat3, None), "t_start": (_float, None),
                     "t_end": (_float, None)},
    "gust": {"kind": None, "base": None, "gust": (_vec3, None), "t_start": (_float, None),
             "t_end": (_float, None)},
    "trig": {"kind": None, "terms": None},
}
_WIND_REQUIRED = {"constant": ("value",), "spatial_sine": ("base",),
                  "gust": ("base", "gust", "t_start", "t_end"), "trig": ("terms",)}

_OBSTACLE = {
    "sphere": {"shape": None, "center": (_vec3, None), "radius": (_float, _positive),
               "velocity": (_vec3, None), "name": (_str, None)},
    "box": {"shape": None, "lo": (_vec3, None), "hi": (_vec3, None), "velocity": (_vec3, None),
            "name": (_str, None)},
    "path_sphere": {"shape": None, "radius": (_float, _positive), "tau": (_float, _nonneg),
                    "speed": (_float, _nonneg), "offset": (_vec3, None),
                    "t_start": (_float, _nonneg), "name": (_str, None)},
}
_OBSTACLE_REQUIRED = {"sphere": ("center", "radius"), "box": ("lo", "hi"),
                      "path_sphere": ("radius", "tau")}


class _Locator:
    """Maps dotted key paths back to source lines."""

    _header = re.compile(r"^\s*(\[\[?)\s*([A-Za-z0-9_.\-]+)\s*\]\]?")
    _assign = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")

    def __init__(self, text):
        self.lines = text.splitlines()

    def line(self, path):
        """1-based line of a path like 'vehicle.m' or 'obstacles[1].radius'."""
        if not path:
            return None
        parts = re.findall(r"([A-Za-z0-9_\-]+)(?:\[(\d+)\])?", path)
        names = [p for p, _ in parts]
        index = int(parts[0][1]) if parts[0][1] else None
        # innermost match first, then the enclosing tables
        for cut in range(len(names) - 1, -1, -1):
            n = self._find(".".join(names[:cut]), index, names[cut])
            if n:
                return n
        return None

    def _find(self, section, index, key):
        target = f"{section}.{key}" if section else key
        current, seen = "", {}
        for n, text in enumerate(self.lines, 1):
            m = self._header.match(text)
            if m:
                current = m.group(2)
                array = m.group(1) == "[["
                if array:
                    seen[current] = seen.get(current, -1) + 1
                if current == target and (index is None or not array or seen[current] == index):
                    return n
                continue
            if current != section:
                continue
            if index is not None and section in seen and seen[section] != index:
                continue
            a = self._assign.match(text)
            if a and a.group(1) == key:
                return n
        return None


class _Reader:
    def __init__(self, text):
        self.loc = _Locator(text)

    def error(self, message, key):
        return ConfigError(message, key, self.loc.line(key) if key else None)

    def table(self, d, schema, prefix, required=()):
        if not isinstance(d, dict):
            raise self.error("expected a table", prefix)
        for k in d:
            if k not in schema:
                raise self.error(f"unknown key (allowed: {', '.join(schema)})", _join(prefix, k))
        missing = [k for k in required if k not in d]
        if missing:
            raise self.error(f"missing required key(s): {', '.join(missing)}", prefix or None)
        out = {}
        for k, v in d.items():
            spec = schema[k]
            if spec is None:
                out[k] = v
                continue
            conv, check = spec
            key = _join(prefix, k)
            try:
                val = conv(v)
            except TypeError as exc:
                raise self.error(f"type mismatch, {exc}", key) from None
            except ValueError as exc:
                raise self.error(str(exc), key) from None
            if check is not None:
                try:
                    check(val)
                except ValueError as exc:
                    raise self.error(f"out of range, {exc} (got {val})", key) from None
            out[k] = val
        return out

    def build(self, ctor, kwargs, key):
        try:
            return ctor(**kwargs)
        except (ValueError, TypeError) as exc:
            raise self.error(str(exc), key) from None

    def wind(self, d, key):
        if not isinstance(d, dict):
            raise self.error("expected a table", key)
        kind = d.get("kind")
        if kind not in _WIND:
            raise self.error(f"kind must be one of {list(_WIND)}", _join(key, "kind"))
        w = self.table(d, _WIND[kind], key, _WIND_REQUIRED[kind])
        if kind == "constant":
            return ConstantWind(w["value"])
        if kind == "spatial_sine":
            kw = {k: w[k] for k in ("amplitude", "p0", "n_w", "t_start", "t_end") if k in w}
            return self.build(lambda **a: SpatialSineWind(w["base"], **a), kw, key)
        if kind == "gust":
            base = self.wind(w["base"], _join(key, "base"))
            if not w["t_end"] >= w["t_start"]:
                raise self.error("out of range, t_end must be >= t_start", _join(key, "t_end"))
            return GustWind(base, w["gust"], w["t_start"], w["t_end"])
        terms = w["terms"]
        if not isinstance(terms, list) or len(terms) != 3:
            raise self.error("type mismatch, expected 3 terms [amp, func, coord, offset]",
                             _join(key, "terms"))
        out = []
        for i, term in enumerate(terms):
            ok = (isinstance(term, list) and len(term) == 4 and _is_num(term[0])
                  and term[1] in ("sin", "cos") and term[2] in ("x", "y", "z") and _is_num(term[3]))
            if not ok:
                raise self.error(f"term {i} must be [amp, 'sin'|'cos', 'x'|'y'|'z', offset]",
                                 _join(key, "terms"))
            out.append((float(term[0]), term[1], term[2], float(term[3])))
        return TrigWind(out)

    def obstacle(self, d, key):
        if not isinstance(d, dict):
            raise self.error("expected a table", key)
        shape = d.get("shape")
        if shape not in _OBSTACLE:
            raise self.error(f"shape must be one of {list(_OBSTACLE)}", _join(key, "shape"))
        o = self.table(d, _OBSTACLE[shape], key, _OBSTACLE_REQUIRED[shape])
        v = o.get("velocity", [0.0, 0.0, 0.0])
        name = o.get("name", "")
        if shape == "sphere":
            return self.build(Sphere, dict(center=o["center"], radius=o["radius"], velocity=v,
                                           name=name), key)
        if shape == "box":
            return self.build(Box, dict(lo=o["lo"], hi=o["hi"], velocity=v, name=name), key)
        kw = {k: o[k] for k in ("radius", "tau", "speed", "offset", "t_start", "name") if k in o}
        return self.build(PathObstacle, kw, key)


def _join(prefix, k):
    return f"{prefix}.{k}" if prefix else k


def _gains(reader, d, schema, ctor, key):
    t = reader.table(d, schema, key)
    return reader.build(ctor, t, key)


def parse_scenario_text(text, source="<string>"):
    """Scenario plus CLI options ({'compare': [...]}) from TOML text."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"invalid TOML in {source}: {exc}", None,
                          int(m.group(1)) if m else None) from None
    r = _Reader(text)
    if not doc:
        raise ConfigError(f"empty scenario; required keys: {', '.join(REQUIRED)}")
    allowed = dict(_TOP)
    allowed.update({k: None for k in _TABLES + _ARRAYS + ("compare",)})
    top = r.table(doc, allowed, "", REQUIRED)

    compare = top.get("compare", [])
    if not isinstance(compare, list) or not all(isinstance(a, str) and a in ABLATIONS
                                                for a in compare):
        raise r.error(f"type mismatch, expected a list drawn from {list(ABLATIONS)}", "compare")

    kw = {k: top[k] for k in ("name", "duration", "control_rate", "rng_seed", "ablation",
                              "c_delta", "window", "residual_noise") if k in top}
    kw["wind"] = r.wind(top["wind"], "wind")
    if "initial" in top:
        ini = r.table(top["initial"], _INITIAL, "initial")
        kw["initial"] = State(ini.get("p", [0.0] * 3), ini.get("v", [0.0] * 3),
                              ini.get("euler", [0.0] * 3))
    if "vehicle" in top:
        vt = r.table(top["vehicle"], _VEHICLE, "vehicle")
        if "g" in vt:
            vt["g_vec"] = vt.pop("g")
        kw["vehicle"] = r.build(VehicleParams, vt, "vehicle")
    if "reference" in top:
        rt = r.table(top["reference"], _REFERENCE, "reference")
        rt.pop("kind", None)
        kw["reference"] = r.build(Spiral, rt, "reference")
    sections = (("tracking", _TRACKING, TrackingGains), ("barrier", _BARRIER, BarrierGains),
                ("kernel", _KERNEL, KernelParams), ("ellipsoid", _ELLIPSOID, EllipsoidSettings))
    for name, schema, ctor in sections:
        if name in top:
            kw[name] = _gains(r, top[name], schema, ctor, name)
    if "zones" in top:
        zones = []
        if not isinstance(top["zones"], list):
            raise r.error("expected an array of tables [[zones]]", "zones")
        for i, z in enumerate(top["zones"]):
            zt = r.table(z, _ZONE, f"zones[{i}]", ("label", "t_start", "t_end"))
            zones.append((zt["label"], zt["t_start"], zt["t_end"]))
        kw["zone_windows"] = zones
    if "obstacles" in top:
        if not isinstance(top["obstacles"], list):
            raise r.error("expected an array of tables [[obstacles]]", "obstacles")
        kw["obstacles"] = [r.obstacle(o, f"obstacles[{i}]") for i, o in enumerate(top["obstacles"])]
    scenario = r.build(Scenario, kw, None)
    return scenario, {"compare": list(compare)}


def parse_scenario(path):
    """Scenario from a TOML file; errors name the key and line."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_scenario_text(text, str(path))[0]


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_scenario_text(text, str(path))


def _plain(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def scenario_to_dict(sc):
    """Every resolved field, in the same layout parse_scenario reads."""
    P = sc.vehicle
    d = {"name": sc.name, "duration": sc.duration, "control_rate": sc.control_rate,
         "rng_seed": sc.rng_seed, "ablation": sc.ablation, "c_delta": sc.c_delta,
         "window": sc.window, "residual_noise": sc.residual_noise,
         "wind": sc.wind.to_dict(),
         "initial": {"p": sc.initial.p.tolist(), "v": sc.initial.v.tolist(),
                     "euler": sc.initial.omega_euler.tolist()},
         "vehicle": {"m": P.m, "F_max": P.F_max, "omega_max": P.omega_max, "s_r": P.s_r,
                     "g": P.g_vec.tolist()},
         "reference": sc.reference.to_dict()}
    for name, obj in (("tracking", sc.tracking), ("barrier", sc.barrier), ("kernel", sc.kernel),
                      ("ellipsoid", sc.ellipsoid)):
        d[name] = {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    d["zones"] = [{"label": a, "t_start": float(b), "t_end": float(c)} for a, b, c in sc.zone_windows]
    if sc.obstacles:
        d["obstacles"] = [ob.to_dict() for ob in sc.obstacles]
    return _floats(d)


def _floats(x):
    if isinstance(x, dict):
        return {k: _floats(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_floats(v) for v in x]
    return _plain(x)


def dump_scenario(sc):
    return tomli_w.dumps(scenario_to_dict(sc))
