"""Command-line runner: `spqc run` and `spqc metrics`."""

import argparse
import csv
import json
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from .config import ConfigError, dump_scenario, parse_scenario_text
from .sim import ABLATIONS, compute_metrics, run_simulation

PRESETS = ("zone-abc", "obstacle-course", "nominal-nowind")

_XYZ = ("x", "y", "z")
_RPY = ("roll", "pitch", "yaw")
# (log field, unit, component suffixes or None for a scalar)
COLUMNS = (
    ("t", "s", None),
    ("p", "m", _XYZ), ("v", "m/s", _XYZ), ("euler", "rad", _RPY),
    ("p_d", "m", _XYZ), ("v_d", "m/s", _XYZ), ("a_d", "m/s^2", _XYZ), ("psi_d", "rad", None),
    ("omega_d", "rad", _RPY),
    ("F_n", "N", None), ("w_n", "rad/s", _XYZ), ("F", "N", None), ("w", "rad/s", _XYZ),
    ("h_p", "1", None), ("h_R", "m", None),
    ("beta", "N", None), ("gamma", "rad^2/s", None), ("eta", "1/s^2", None), ("eps", "m/s", None),
    ("mu", "N", _XYZ), ("sigma", "N", _XYZ), ("wind", "N", _XYZ),
    ("C", "m", tuple(f"{i}{j}" for i in range(3) for j in range(3))), ("zeta", "m", _XYZ),
    ("sensed", "count", None), ("srow_p_nominal", "1/s^2", None),
    ("srow_a_nominal", "m/s", None), ("clearance", "m", None), ("gp_count", "count", None),
    ("outcome", "text", None),
)


def csv_header():
    out = []
    for name, unit, comps in COLUMNS:
        if comps is None:
            out.append(f"{name} [{unit}]")
        else:
            out.extend(f"{name}_{c} [{unit}]" for c in comps)
    return out


def _fmt(x):
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(log, path):
    cols = log.columns
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header())
        for k in range(len(log)):
            row = []
            for name, _, comps in COLUMNS:
                val = cols[name][k]
                if comps is None:
                    row.append(_fmt(val))
                else:
                    row.extend(_fmt(v) for v in np.asarray(val, dtype=float).reshape(-1))
            w.writerow(row)


def read_csv(path):
    """Columns of a log written by write_csv, keyed by log field."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty log")
    if rows[0] != csv_header():
        raise ValueError(f"{path}: header does not match the log format")
    cols, i = {}, 0
    for name, _, comps in COLUMNS:
        width = 1 if comps is None else len(comps)
        block = [r[i:i + width] for r in rows[1:]]
        if name == "outcome":
            cols[name] = [b[0] for b in block]
        elif comps is None:
            cols[name] = [float(b[0]) for b in block]
        else:
            cols[name] = [np.array([float(x) for x in b]) for b in block]
        i += width
    return cols


def format_metrics(m, title=""):
    lines = [f"metrics{': ' + title if title else ''}", f"status: {m.status}", f"steps: {m.steps}"]
    lines.append("rmse per zone [m]:")
    lines += [f"  {k}: {v:.6g}" for k, v in m.rmse_per_zone.items()]
    lines.append(f"min clearance [m]: {m.min_clearance:.6g}")
    lines.append(f"interval coverage: {m.interval_coverage:.6g}")
    lines.append(f"collisions: {m.collision_count}")
    lines.append("max slack: " + ", ".join(f"{k}={v:.6g}" for k, v in m.max_slack.items()))
    return "\n".join(lines) + "\n"


def format_comparison(results):
    """RMSE table with one row per controller and one column per zone."""
    zones = list(next(iter(results.values())).rmse_per_zone)
    head = "controller".ljust(12) + "".join(f"{z:>12}" for z in zones)
    lines = ["tracking RMSE [m]", head, "-" * len(head)]
    for ab, m in results.items():
        lines.append(ab.upper().ljust(12) + "".join(f"{m.rmse_per_zone[z]:12.4f}" for z in zones))
    return "\n".join(lines) + "\n"


def _json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def preset_text(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("spqc.presets").joinpath(f"{name}.toml").read_text(encoding="utf-8")


def run_experiment(scenario_path=None, out_dir=".", seed=None, ablation=None, preset=None,
                   stream=None):
    """Run one scenario (or its comparison set); returns the exit status."""
    stream = stream or sys.stdout
    if (scenario_path is None) == (preset is None):
        raise ConfigError("give exactly one of --scenario or --preset")
    if preset is not None:
        text, source = preset_text(preset), f"preset {preset}"
    else:
        text, source = Path(scenario_path).read_text(encoding="utf-8"), str(scenario_path)
    scenario, opts = parse_scenario_text(text, source)
    if seed is not None:
        scenario = replace(scenario, rng_seed=seed)
    if ablation is not None:
        runs = [ablation]
    else:
        runs = opts["compare"] or [scenario.ablation]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = scenario.name or "run"
    results, status = {}, 0
    for ab in runs:
        sc = replace(scenario, ablation=ab)
        base = out / f"{stem}_{ab}"
        (out / f"{base.name}_scenario.toml").write_text(dump_scenario(sc), encoding="utf-8")
        log = run_simulation(sc)
        write_csv(log, f"{base}.csv")
        if len(log) == 0:
            print(f"{ab}: {log.status}: {log.message}", file=sys.stderr)
            status = 2
            continue
        m = compute_metrics(log, sc.zone_windows, sc.c_delta)
        (out / f"{base.name}_metrics.txt").write_text(format_metrics(m, f"{stem} {ab}"),
                                                      encoding="utf-8")
        _json(m.to_dict(), out / f"{base.name}_metrics.json")
        stream.write(format_metrics(m, f"{stem} {ab}"))
        results[ab] = m
        if log.status != "ok":
            print(f"{ab}: {log.status}: {log.message}", file=sys.stderr)
            status = 2
    if len(results) > 1:
        table = format_comparison(results)
        (out / f"{stem}_comparison.txt").write_text(table, encoding="utf-8")
        _json({ab: m.rmse_per_zone for ab, m in results.items()}, out / f"{stem}_comparison.json")
        stream.write(table)
    return status


def metrics_from_log(log_path, scenario_path=None):
    cols = read_csv(log_path)
    if len(cols["t"]) == 0:
        raise ValueError(f"{log_path}: log has no steps")
    if scenario_path is not None:
        sc, _ = parse_scenario_text(Path(scenario_path).read_text(encoding="utf-8"),
                                    str(scenario_path))
        return compute_metrics(cols, sc.zone_windows, sc.c_delta)
    from .sim import Scenario
    return compute_metrics(cols, Scenario().zone_windows)


def build_parser():
    ap = argparse.ArgumentParser(prog="spqc", description="Safety-filtered quadrotor tracking runs.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario and write CSV, metrics and the resolved scenario")
    r.add_argument("--scenario", help="scenario TOML file")
    r.add_argument("--preset", choices=PRESETS, help="shipped scenario instead of --scenario")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seed", type=int, help="override rng_seed")
    r.add_argument("--ablation", choices=ABLATIONS, help="run only this controller")
    m = sub.add_parser("metrics", help="recompute metrics from a CSV log")
    m.add_argument("--log", required=True, help="CSV written by `spqc run`")
    m.add_argument("--scenario", help="scenario TOML for zone windows and c_delta")
    m.add_argument("--json", action="store_true", help="print JSON instead of text")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run_experiment(args.scenario, args.out, args.seed, args.ablation, args.preset)
        met = metrics_from_log(args.log, args.scenario)
        if args.json:
            print(json.dumps(met.to_dict(), indent=2, sort_keys=True))
        else:
            sys.stdout.write(format_metrics(met, args.log))
        return 0
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
