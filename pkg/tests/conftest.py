import numpy as np
import pytest

from spqc.cli import preset_text
from spqc.config import parse_scenario_text
from spqc.sim import run_simulation


def load_preset(name, **overrides):
    sc, opts = parse_scenario_text(preset_text(name), name)
    if overrides:
        from dataclasses import replace
        sc = replace(sc, **overrides)
    return sc, opts


_RUNS = {}


def preset_run(name, ablation="spqc"):
    """Cached (scenario, log) for a shipped preset; runs are deterministic."""
    key = (name, ablation)
    if key not in _RUNS:
        sc, _ = load_preset(name, ablation=ablation)
        _RUNS[key] = (sc, run_simulation(sc))
    return _RUNS[key]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(number, passed, detail):
    ACCEPTANCE[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'}  {detail}")


def lex_projection_oracle(u_n, c, r, lb, ub):
    """min |u - u_n|^2 over the box subject to c.u + r + s >= 0, with s first
    minimized: the limit of the slack QPs as the slack weight grows.

    s* = max(0, -(r + max over the box of c.u)); u(lam) = clip(u_n + lam c)
    moves monotonically up the row, so the projection is a scalar root.
    """
    from scipy.optimize import brentq

    u_n, c = np.asarray(u_n, float), np.asarray(c, float)
    lb, ub = np.asarray(lb, float), np.asarray(ub, float)
    best = r + np.sum(np.where(c > 0, c * ub, c * lb))
    s = max(0.0, -best)

    def g(lam):
        return c @ np.clip(u_n + lam * c, lb, ub) + r + s

    u0 = np.clip(u_n, lb, ub)
    if g(0.0) >= 0:
        return u0, s
    hi = 1.0
    while g(hi) < 0 and hi < 1e12:
        hi *= 2
    if g(hi) < 0:
        # the row is met only at the far box corner
        return np.where(c > 0, ub, np.where(c < 0, lb, u0)), s
    lam = brentq(g, 0.0, hi, xtol=1e-15, rtol=1e-15)
    return np.clip(u_n + lam * c, lb, ub), s
