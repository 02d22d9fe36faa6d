"""Command-line front end.

Configuration is an INI file with flat sections; command-line flags and
``--set section.key=value`` override it.  Every command writes its outputs
and a ``manifest.ini`` into the output directory.  The manifest echoes the
full resolved configuration and can be passed back with ``--config``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass

from . import calibration as cal
from .analysis import UndefinedMetricError, max_solid_velocity
from .fem import BrinkmanParams, FemError, FlowParams
from .mesh import (
    PRESET_NAME,
    GeometrySpec,
    MeshError,
    MeshSpec,
    Rect,
    benchmark_geometry,
    build_mesh,
    rasterize_density,
)
from .solver import SolverError, SolveSettings, solve_body_fitted, solve_flow, write_state
from .svgplot import PLOT_KINDS, SWEEP_Y_COLUMNS, PlotError, emit_plot

log = logging.getLogger("brinkman_alpha")

COMMANDS = ("solve", "reference", "sweep", "fit", "predict", "validate", "plot")
MODEL_KINDS = {"h": "h_model", "mu": "mu_model", "lc": "lc_model", "vc": "vc_model"}
GEOMETRIES = (PRESET_NAME, "custom")

# section -> key -> default (as text); every accepted key is listed here
SCHEMA = {
    "run": {"command": "", "out": "out", "workers": "1"},
    "flow": {"rho_f": "1", "mu": "1", "v_c": "1"},
    "brinkman": {"alpha_max": "0", "alpha_min": "0", "p_alpha": "0.1"},
    "mesh": {"L_c": "1", "h": "0.01"},
    "geometry": {"preset": PRESET_NAME, "box_x0": "", "beam_x0": "", "solids": ""},
    "solver": {"newton_tol": "1e-10", "max_iters": "50", "initial_guess": "stokes",
               "outlet_pressure": "strong"},
    "sweep": {"param": "h", "values": "", "alpha_max_grid": "0,1e0..1e20",
              "lc_mesh": "scaled", "reference": "true"},
    "model": {"kind": "h", "file": ""},
    "fit": {"table": "", "points": ""},
    "predict": {"value": "", "q": ""},
    "validate": {"table": "", "points": "", "qs": ""},
    "plot": {"input": "", "kind": "loglog_sweep", "y_column": "max_v_solid", "title": ""},
}
IGNORED_SECTIONS = ("manifest",)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER, EXIT_FIT, EXIT_PLOT, EXIT_INTERNAL = 0, 2, 3, 4, 5, 6, 1


class ConfigError(ValueError):
    pass


# -- value parsing ---------------------------------------------------------

def parse_number(text: str, key: str) -> float:
    """Float from ``1e8``, ``0.01`` or a fraction like ``1/30``."""
    t = text.strip()
    try:
        if "/" in t:
            num, den = t.split("/")
            value = float(num) / float(den)
        else:
            value = float(t)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{key}: expected a number (e.g. 1e8, 0.01, 1/30), got {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: expected a finite number, got {text!r}")
    return value


def parse_int(text: str, key: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def parse_bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true or false, got {text!r}")


def parse_list(text: str, key: str) -> list:
    items = [t for t in text.replace(";", ",").split(",") if t.strip()]
    return [parse_number(t, key) for t in items]


def parse_alpha_grid(text: str, key: str = "sweep.alpha_max_grid") -> list:
    """Comma list of numbers and decade ranges: ``0,1e0..1e20`` or
    ``1e6..1e18:2`` (every second decade)."""
    out = []
    for item in (t.strip() for t in text.split(",")):
        if not item:
            continue
        if ".." not in item:
            out.append(parse_number(item, key))
            continue
        rng, _, step = item.partition(":")
        lo_s, hi_s = rng.split("..", 1)
        lo, hi = parse_number(lo_s, key), parse_number(hi_s, key)
        step = parse_int(step, key) if step else 1
        if lo <= 0 or hi < lo or step < 1:
            raise ConfigError(f"{key}: bad decade range {item!r}")
        klo, khi = math.log10(lo), math.log10(hi)
        if abs(klo - round(klo)) > 1e-9 or abs(khi - round(khi)) > 1e-9:
            raise ConfigError(f"{key}: range ends must be powers of ten, got {item!r}")
        out += [10.0**k for k in range(round(klo), round(khi) + 1, step)]
    if not out:
        raise ConfigError(f"{key}: empty alpha_max grid")
    return out


def parse_points(text: str, key: str):
    """``value@alpha`` pairs separated by ``;`` or ``,``; empty means default."""
    if not text.strip():
        return None
    pts = []
    for item in (t.strip() for t in text.replace(";", ",").split(",")):
        if not item:
            continue
        if "@" not in item:
            raise ConfigError(f"{key}: expected value@alpha_max pairs, got {item!r}")
        v, a = item.split("@", 1)
        pts.append((parse_number(v, key), parse_number(a, key)))
    return pts


def parse_solids(text: str, key: str = "geometry.solids"):
    """``name:x0,y0,width,height`` rectangles in meters, separated by ``;``."""
    rects = []
    for item in (t.strip() for t in text.split(";")):
        if not item:
            continue
        name, _, nums = item.rpartition(":")
        vals = [parse_number(t, key) for t in nums.split(",")]
        if len(vals) != 4:
            raise ConfigError(f"{key}: expected name:x0,y0,width,height, got {item!r}")
        rects.append(Rect(*vals, name=name.strip()))
    return tuple(rects)


# -- configuration ---------------------------------------------------------

@dataclass
class RunConfig:
    command: str
    raw: dict          # section -> key -> text, defaults applied
    out: str
    workers: int
    flow: FlowParams
    brinkman: BrinkmanParams
    mesh: MeshSpec
    geometry: GeometrySpec   # at the configured L_c; sweeps rescale it
    settings: SolveSettings


def _check(key, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{key}: {exc}") from None


def load_raw(config_path=None, overrides=()) -> dict:
    """Defaults, then the config file, then ``(section, key, value)``
    overrides.  Unknown sections or keys are rejected."""
    raw = {sec: dict(keys) for sec, keys in SCHEMA.items()}
    if config_path is not None:
        if not os.path.isfile(config_path):
            raise ConfigError(f"config file not found: {config_path}")
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read(config_path)
        except configparser.Error as exc:
            raise ConfigError(f"{config_path}: malformed config: {exc}") from None
        for sec in parser.sections():
            if sec in IGNORED_SECTIONS:
                continue
            if sec not in SCHEMA:
                raise ConfigError(f"unknown section [{sec}]; expected one of {sorted(SCHEMA)}")
            for key, value in parser.items(sec):
                if key not in SCHEMA[sec]:
                    raise ConfigError(f"unknown key {sec}.{key}; expected one of "
                                      f"{sorted(SCHEMA[sec])}")
                raw[sec][key] = value
    for sec, key, value in overrides:
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"unknown key {sec}.{key}")
        raw[sec][key] = value
    return raw


def _choice(raw, sec, key, choices):
    v = raw[sec][key].strip()
    if v not in choices:
        raise ConfigError(f"{sec}.{key}: expected one of {list(choices)}, got {v!r}")
    return v


def build_config(raw: dict) -> RunConfig:
    """Validate the raw text configuration."""
    command = _choice(raw, "run", "command", COMMANDS)
    num = lambda sec, key: parse_number(raw[sec][key], f"{sec}.{key}")  # noqa: E731
    workers = parse_int(raw["run"]["workers"], "run.workers")
    if workers < 1:
        raise ConfigError("run.workers: must be >= 1")
    flow = _check("flow", FlowParams, num("flow", "rho_f"), num("flow", "mu"), num("flow", "v_c"))
    brinkman = _check("brinkman", BrinkmanParams, num("brinkman", "alpha_max"),
                      num("brinkman", "alpha_min"), num("brinkman", "p_alpha"))
    L_c = num("mesh", "L_c")
    mesh = _check("mesh.h", MeshSpec, L_c, num("mesh", "h"))
    settings = _check("solver", SolveSettings, num("solver", "newton_tol"),
                      parse_int(raw["solver"]["max_iters"], "solver.max_iters"),
                      raw["solver"]["initial_guess"].strip(),
                      raw["solver"]["outlet_pressure"].strip())
    preset = _choice(raw, "geometry", "preset", GEOMETRIES)
    g = raw["geometry"]
    if preset == PRESET_NAME:
        if g["solids"].strip():
            raise ConfigError("geometry.solids: only allowed with preset = custom")
        box = parse_number(g["box_x0"], "geometry.box_x0") / L_c if g["box_x0"].strip() else None
        beam = parse_number(g["beam_x0"], "geometry.beam_x0") / L_c if g["beam_x0"].strip() \
            else None
        geometry = _check("geometry", benchmark_geometry, L_c, box, beam)
    else:
        if g["box_x0"].strip() or g["beam_x0"].strip():
            raise ConfigError("geometry.box_x0/beam_x0: only allowed with the preset geometry")
        geometry = _check("geometry.solids", GeometrySpec, L_c, parse_solids(g["solids"]))
    if command in ("solve", "reference"):
        # fail on misaligned geometry before any solve starts
        _check("geometry", rasterize_density, build_mesh(mesh), geometry)
    return RunConfig(command, raw, raw["run"]["out"], workers, flow, brinkman, mesh,
                     geometry, settings)


def sweep_spec(cfg: RunConfig) -> cal.SweepSpec:
    s = cfg.raw["sweep"]
    param = _choice(cfg.raw, "sweep", "param", cal.PARAMETERS)
    values = parse_list(s["values"], "sweep.values")
    if not values:
        raise ConfigError("sweep.values: give at least one parameter value")
    alphas = parse_alpha_grid(s["alpha_max_grid"])
    lc_mesh = _choice(cfg.raw, "sweep", "lc_mesh", ("scaled", "fixed"))
    return _check("sweep", cal.SweepSpec, param, values, alphas, cfg.flow, cfg.mesh.channel_width,
                  cfg.mesh.h, cfg.brinkman.alpha_min, cfg.brinkman.p_alpha, cfg.geometry,
                  lc_mesh, cfg.settings, parse_bool(s["reference"], "sweep.reference"))


def write_manifest(path, raw, inputs, outputs):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for sec, keys in raw.items():
        cp[sec] = dict(keys)
    cp["manifest"] = {
        "inputs": ", ".join(inputs),
        "outputs": ", ".join(outputs),
    }
    with open(path, "w") as fh:
        cp.write(fh)


# -- commands --------------------------------------------------------------

def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _report_dict(report, extra):
    d = {
        "converged": report.converged,
        "iterations": report.iterations,
        "reference_norm": report.reference_norm,
        "residual_history": report.residual_history,
    }
    d.update(extra)
    return d


def cmd_solve(cfg: RunConfig, body_fitted: bool):
    mesh = build_mesh(cfg.mesh)
    rho = rasterize_density(mesh, cfg.geometry)
    if body_fitted:
        state, report = solve_body_fitted(mesh, rho, cfg.flow, cfg.settings)
    else:
        state, report = solve_flow(mesh, rho, cfg.flow, cfg.brinkman, cfg.settings)
    extra = {"n_dofs": mesh.n_dofs, "n_elements": mesh.n_elements,
             "solver": "body_fitted" if body_fitted else "brinkman"}
    try:
        extra["max_v_solid"] = max_solid_velocity(state, mesh, rho)
    except UndefinedMetricError:
        extra["max_v_solid"] = None
    files = {"velocity": "velocity.txt", "pressure": "pressure.txt", "report": "solve_report.json"}
    write_state(state, mesh, os.path.join(cfg.out, files["velocity"]),
                os.path.join(cfg.out, files["pressure"]))
    _dump_json(os.path.join(cfg.out, files["report"]), _report_dict(report, extra))
    print(f"converged in {report.iterations} Newton iterations, "
          f"max|v_solid| = {extra['max_v_solid']}")
    return [], list(files.values())


def cmd_sweep(cfg: RunConfig):
    spec = sweep_spec(cfg)
    table = cal.run_sweep(spec, cfg.workers)
    table.write_csv(os.path.join(cfg.out, "sweep.csv"))
    failed = len(table.failures)
    if failed:
        print(f"warning: {failed} of {len(table)} sweep cells failed", file=sys.stderr)
    print(f"{len(table)} cells, {failed} failed")
    return [], ["sweep.csv"]


def _input_file(cfg, sec, key):
    path = cfg.raw[sec][key].strip()
    if not path:
        raise ConfigError(f"{sec}.{key}: an input file is required for {cfg.command}")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{sec}.{key}: file not found: {path}")
    return path


def _model_kind(cfg):
    return MODEL_KINDS[_choice(cfg.raw, "model", "kind", tuple(MODEL_KINDS))]


def _load_model(cfg):
    path = cfg.raw["model"]["file"].strip()
    if path:
        if not os.path.isfile(path):
            raise FileNotFoundError(f"model.file: file not found: {path}")
        return cal.FitModel.read(path), [path]
    return cal.reference_model(_model_kind(cfg)), []


def cmd_fit(cfg: RunConfig):
    path = _input_file(cfg, "fit", "table")
    table = cal.SweepTable.read_csv(path)
    kind = _model_kind(cfg)
    points = parse_points(cfg.raw["fit"]["points"], "fit.points")
    if points is None:
        points = cal.default_fit_points(table, kind)
    model = cal.fit_model(table, kind, points)
    model.write(os.path.join(cfg.out, "model.json"))
    print(f"{kind}: coefficients " + ", ".join(f"{c:.6g}" for c in model.coefficients))
    return [path], ["model.json"]


def cmd_predict(cfg: RunConfig):
    model, inputs = _load_model(cfg)
    p = cfg.raw["predict"]
    if not p["value"].strip() or not p["q"].strip():
        raise ConfigError("predict.value and predict.q are required for predict")
    value = parse_number(p["value"], "predict.value")
    q = parse_number(p["q"], "predict.q")
    alpha = cal.predict_alpha_max(model, value, q)
    _dump_json(os.path.join(cfg.out, "prediction.json"),
               {"kind": model.kind, "parameter": model.parameter, "value": value, "q": q,
                "alpha_max": alpha, "coefficients": list(model.coefficients)})
    print(f"alpha_max = {alpha:.6e}")
    return inputs, ["prediction.json"]


def cmd_validate(cfg: RunConfig):
    model, inputs = _load_model(cfg)
    path = _input_file(cfg, "validate", "table")
    table = cal.SweepTable.read_csv(path)
    v = cfg.raw["validate"]
    qs = parse_list(v["qs"], "validate.qs") or None
    points = parse_points(v["points"], "validate.points")
    report = cal.validate_fit(model, table, qs, points)
    report.write_csv(os.path.join(cfg.out, "validation.csv"))
    _dump_json(os.path.join(cfg.out, "validation.json"), report.to_dict())
    print(f"{model.kind}: {len(report.points)} points, max error {report.max_error:.4%}, "
          f"mean {report.mean_error:.4%}, {len(report.excluded)} excluded")
    return inputs + [path], ["validation.csv", "validation.json"]


def cmd_plot(cfg: RunConfig):
    path = _input_file(cfg, "plot", "input")
    p = cfg.raw["plot"]
    kind = _choice(cfg.raw, "plot", "kind", PLOT_KINDS)
    y_column = _choice(cfg.raw, "plot", "y_column", SWEEP_Y_COLUMNS)
    if kind == "loglog_sweep":
        data = cal.SweepTable.read_csv(path)
    else:
        data = cal.ValidationReport.read_csv(path)
    svg = emit_plot(data, kind, y_column, p["title"])
    with open(os.path.join(cfg.out, "plot.svg"), "w") as fh:
        fh.write(svg)
    return [path], ["plot.svg"]


def run_command(cfg: RunConfig):
    """Run ``cfg.command``; returns ``(inputs, outputs)`` file lists."""
    os.makedirs(cfg.out, exist_ok=True)
    if cfg.command in ("solve", "reference"):
        inputs, outputs = cmd_solve(cfg, cfg.command == "reference")
    else:
        inputs, outputs = {
            "sweep": cmd_sweep, "fit": cmd_fit, "predict": cmd_predict,
            "validate": cmd_validate, "plot": cmd_plot,
        }[cfg.command](cfg)
    write_manifest(os.path.join(cfg.out, "manifest.ini"), cfg.raw, inputs,
                   outputs + ["manifest.ini"])
    return inputs, outputs


# -- entry point -----------------------------------------------------------

def _parser():
    ap = argparse.ArgumentParser(
        prog="brinkman-alpha",
        description="Brinkman-penalized channel flow solves, alpha_max sweeps and calibration fits.",
    )
    ap.add_argument("command", nargs="?", choices=COMMANDS,
                    help="command to run (or run.command in the config)")
    ap.add_argument("--config", help="INI configuration (a previous manifest.ini works)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--workers", type=int, help="parallel sweep workers")
    ap.add_argument("--geometry", choices=GEOMETRIES)
    ap.add_argument("--param", choices=cal.PARAMETERS, help="sweep parameter")
    ap.add_argument("--values", help="sweep parameter values, e.g. 1/30,1/50,1/70")
    ap.add_argument("--alpha-max-grid", help='e.g. "0,1e0..1e20" or "1e6..1e18:2"')
    ap.add_argument("--model", choices=tuple(MODEL_KINDS), help="calibration law")
    ap.add_argument("--model-file", help="fitted model JSON for predict/validate")
    ap.add_argument("--table", help="sweep CSV (fit, validate) or plot input CSV")
    ap.add_argument("--value", help="parameter value for predict")
    ap.add_argument("--q", help="target exponent of max|v_solid| for predict")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override any config key (repeatable)")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def _overrides(args):
    ov = []
    if args.command:
        ov.append(("run", "command", args.command))
    simple = {
        "out": ("run", "out"), "workers": ("run", "workers"),
        "geometry": ("geometry", "preset"), "param": ("sweep", "param"),
        "values": ("sweep", "values"), "alpha_max_grid": ("sweep", "alpha_max_grid"),
        "model": ("model", "kind"), "model_file": ("model", "file"),
        "value": ("predict", "value"), "q": ("predict", "q"),
    }
    for attr, (sec, key) in simple.items():
        v = getattr(args, attr)
        if v is not None:
            ov.append((sec, key, str(v)))
    if args.table is not None:
        ov += [("fit", "table", args.table), ("validate", "table", args.table),
               ("plot", "input", args.table)]
    for item in args.set:
        key, eq, value = item.partition("=")
        sec, dot, name = key.partition(".")
        if not eq or not dot:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        ov.append((sec.strip(), name.strip(), value))
    return ov


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 \
        else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(load_raw(args.config, _overrides(args)))
        run_command(cfg)
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, csv.Error) as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MeshError, FemError) as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, cal.SweepError) as exc:
        print(f"error [solver]: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (cal.FitError, cal.PredictionError, UndefinedMetricError) as exc:
        print(f"error [calibration]: {exc}", file=sys.stderr)
        return EXIT_FIT
    except PlotError as exc:
        print(f"error [plot]: {exc}", file=sys.stderr)
        return EXIT_PLOT
    except ValueError as exc:
        print(f"error [input]: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
