"""Parameter sweeps and calibration laws for the maximum inverse
permeability.

Within the linear log-log regime ``max|v_solid| = C / alpha_max``, so a
target leakage ``10**q`` needs ``alpha_max = 10**(-q) * C``.  The leakage
constant ``C`` is fitted per parameter:

    h_model   C = c1/h**2 + c2/h + c3
    mu_model  C = c1*mu + c2
    vc_model  C = c1*v_c + c2
    lc_model  C = a1/L_c**a2 + a3
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import MetricRecord, fluid_state_errors, max_solid_velocity
from .fem import BrinkmanParams, FlowParams
from .mesh import (
    GeometrySpec,
    MeshSpec,
    benchmark_geometry,
    build_mesh,
    rasterize_density,
    scale_geometry,
)
from .solver import SolveSettings, SolverError, solve_body_fitted, solve_flow

log = logging.getLogger(__name__)

PARAMETERS = ("h", "rho_f", "mu", "L_c", "v_c")
MODEL_PARAMETER = {"h_model": "h", "mu_model": "mu", "lc_model": "L_c", "vc_model": "v_c"}
LINEAR_REGIME_MAX_V = 1e-2
LC_EXPONENT_BOUNDS = (0.05, 2.5)
VALIDATION_COLUMNS = ("model_kind", "param_value", "q", "alpha_data", "alpha_model",
                      "abs_error", "rel_error")
DEFAULT_FIT_ALPHAS = (1e8, 1e20)

# Published coefficients from fine-grid sweeps (h down to 1/190, 0.005-mesh
# references); useful as generators and for quick predictions.
REFERENCE_COEFFICIENTS = {
    "h_model": (31.32, 7635.0, -8.039e4),
    "mu_model": (9.857e5, 7331.0),
    "lc_model": (9.065e5, 0.6073, 8.3e4),
    "vc_model": (1.034e6, -2.253e4),
}
SWEEP_COLUMNS = ("param_name", "param_value", "alpha_max", "max_v_solid", "err_v_pct",
                 "err_p_pct", "converged", "newton_iters")


class SweepError(RuntimeError):
    pass


class FitError(ValueError):
    pass


class FitBoundaryError(FitError):
    pass


class PredictionError(ValueError):
    pass


def _strictly_increasing(values, name):
    values = tuple(float(v) for v in values)
    if not values:
        raise ValueError(f"{name} must not be empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{name} must be strictly increasing, got {values}")
    return values


@dataclass(frozen=True)
class SweepSpec:
    varied_parameter: str
    parameter_values: tuple
    alpha_max_values: tuple
    flow: FlowParams = FlowParams()
    L_c: float = 1.0
    h: float = 0.01
    alpha_min: float = 0.0
    p_alpha: float = 0.1
    geometry: GeometrySpec | None = None  # any channel width, rescaled; None = preset
    lc_mesh: str = "scaled"               # L_c sweeps: "scaled" (h = L_c*h) or "fixed"
    settings: SolveSettings = SolveSettings()
    reference: bool = True                # body-fitted solve per value for err_v/err_p

    def __post_init__(self):
        if self.varied_parameter not in PARAMETERS:
            raise ValueError(
                f"varied_parameter must be one of {PARAMETERS}, got {self.varied_parameter!r}"
            )
        object.__setattr__(self, "parameter_values",
                           _strictly_increasing(self.parameter_values, "parameter_values"))
        object.__setattr__(self, "alpha_max_values",
                           _strictly_increasing(self.alpha_max_values, "alpha_max_values"))
        if self.alpha_max_values[0] < self.alpha_min:
            raise ValueError("alpha_max values must be >= alpha_min")
        if self.lc_mesh not in ("scaled", "fixed"):
            raise ValueError(f"lc_mesh must be 'scaled' or 'fixed', got {self.lc_mesh!r}")
        # fail early on meshes that cannot be built
        for v in self.parameter_values:
            self.case(v)

    def case(self, value):
        """Mesh spec, unit-to-L_c geometry and flow parameters for one value
        of the varied parameter."""
        L_c, h, flow = self.L_c, self.h, self.flow
        name = self.varied_parameter
        if name == "h":
            h = value
        elif name == "L_c":
            L_c = value
            if self.lc_mesh == "scaled":
                h = value * self.h
        else:
            flow = replace(flow, **{name: value})
        mesh_spec = MeshSpec(L_c, h)
        if self.geometry is None:
            geom = benchmark_geometry(L_c)
        else:
            geom = scale_geometry(self.geometry, L_c)
        return mesh_spec, geom, flow


@dataclass(frozen=True)
class SweepRow:
    param_name: str
    param_value: float
    record: MetricRecord
    converged: bool
    newton_iters: int
    message: str = ""

    @property
    def alpha_max(self):
        return self.record.alpha_max

    @property
    def leakage_constant(self):
        return self.record.alpha_max * self.record.max_v_solid


@dataclass
class SweepTable:
    param_name: str
    rows: list = field(default_factory=list)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (r.param_value, r.alpha_max))

    def __len__(self):
        return len(self.rows)

    @property
    def parameter_values(self):
        return sorted({r.param_value for r in self.rows})

    @property
    def failures(self):
        return [r for r in self.rows if not r.converged]

    def records(self, value):
        return [r.record for r in self.rows if r.param_value == value and r.converged]

    def select(self, points=None):
        """Converged rows, optionally restricted to ``(param_value, alpha_max)``
        pairs (matched to relative 1e-9)."""
        rows = [r for r in self.rows if r.converged]
        if points is None:
            return rows
        out = []
        for pv, a in points:
            match = [r for r in rows if math.isclose(r.param_value, pv, rel_tol=1e-9)
                     and math.isclose(r.alpha_max, a, rel_tol=1e-9)]
            if not match:
                raise FitError(f"no converged sweep cell at {self.param_name}={pv!r}, "
                               f"alpha_max={a!r}")
            out.append(match[0])
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for r in self.rows:
                rec = r.record
                w.writerow([r.param_name, f"{r.param_value:.17g}", f"{rec.alpha_max:.17g}",
                            f"{rec.max_v_solid:.17g}", f"{rec.err_v:.17g}", f"{rec.err_p:.17g}",
                            "true" if r.converged else "false", r.newton_iters])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(SWEEP_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing sweep columns {sorted(missing)}")
            raw = list(reader)
        names = {r["param_name"] for r in raw}
        if len(names) != 1:
            raise ValueError(f"{path}: expected one param_name, found {sorted(names)}")
        rows = [
            SweepRow(
                r["param_name"], float(r["param_value"]),
                MetricRecord(float(r["alpha_max"]), float(r["max_v_solid"]),
                             float(r["err_v_pct"]), float(r["err_p_pct"])),
                r["converged"].strip().lower() == "true", int(r["newton_iters"]),
            )
            for r in raw
        ]
        return cls(names.pop(), rows)


def _nan_record(alpha):
    return MetricRecord(alpha, float("nan"), float("nan"), float("nan"))


def _sweep_value(spec: SweepSpec, value):
    """All alpha_max cells for one parameter value (one mesh, one reference)."""
    mesh_spec, geom, flow = spec.case(value)
    mesh = build_mesh(mesh_spec)
    rho = rasterize_density(mesh, geom)
    name = spec.varied_parameter
    reference = None
    if spec.reference:
        try:
            reference, _ = solve_body_fitted(mesh, rho, flow, spec.settings)
        except SolverError as exc:
            log.warning("%s=%g: body-fitted reference failed: %s", name, value, exc)
    rows = []
    for alpha in spec.alpha_max_values:
        brinkman = BrinkmanParams(alpha, spec.alpha_min, spec.p_alpha)
        try:
            state, report = solve_flow(mesh, rho, flow, brinkman, spec.settings)
        except SolverError as exc:
            log.warning("%s=%g alpha_max=%g failed: %s", name, value, alpha, exc)
            iters = exc.report.iterations if exc.report is not None else 0
            rows.append(SweepRow(name, value, _nan_record(alpha), False, iters, str(exc)))
            continue
        v = max_solid_velocity(state, mesh, rho)
        if reference is not None:
            ev, ep = fluid_state_errors(state, reference, mesh, rho)
        else:
            ev = ep = float("nan")
        rows.append(SweepRow(name, value, MetricRecord(alpha, v, ev, ep), True,
                             report.iterations))
        log.info("%s=%g alpha_max=%g: max|v_solid|=%.4e err_v=%.3e%% err_p=%.3e%%",
                 name, value, alpha, v, ev, ep)
    return rows


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepTable:
    """Solve every (parameter value, alpha_max) cell.

    Failed cells are kept as non-converged rows; the sweep only fails when
    every cell does.  Row order is canonical whatever the worker count.
    """
    if workers > 1 and len(spec.parameter_values) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            groups = list(pool.map(_sweep_value, [spec] * len(spec.parameter_values),
                                   spec.parameter_values))
    else:
        groups = [_sweep_value(spec, v) for v in spec.parameter_values]
    table = SweepTable(spec.varied_parameter, [r for g in groups for r in g])
    if not any(r.converged for r in table.rows):
        raise SweepError(f"all {len(table)} sweep cells failed")
    return table


# -- fits ------------------------------------------------------------------

@dataclass(frozen=True)
class FitModel:
    kind: str
    coefficients: tuple
    fit_points: tuple = ()      # (parameter value, alpha_max, max_v_solid)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_PARAMETER:
            raise ValueError(f"unknown model kind {self.kind!r}")
        n = 3 if self.kind in ("h_model", "lc_model") else 2
        if len(self.coefficients) != n:
            raise ValueError(f"{self.kind} needs {n} coefficients, got {len(self.coefficients)}")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @property
    def parameter(self):
        return MODEL_PARAMETER[self.kind]

    def leakage_constant(self, x):
        """``C(x) = alpha_max * max|v_solid|`` predicted by the law."""
        x = np.asarray(x, dtype=float)
        c = self.coefficients
        if self.kind == "h_model":
            out = c[0] / x**2 + c[1] / x + c[2]
        elif self.kind == "lc_model":
            out = c[0] / x ** c[1] + c[2]
        else:
            out = c[0] * x + c[1]
        return float(out) if out.ndim == 0 else out

    def to_dict(self):
        return {
            "kind": self.kind,
            "parameter": self.parameter,
            "coefficients": list(self.coefficients),
            "fit_points": [list(p) for p in self.fit_points],
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(d["coefficients"]),
                   tuple(tuple(p) for p in d.get("fit_points", ())), d.get("diagnostics", {}))

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _fit_data(table: SweepTable, points, expected: str, min_points: int,
              require_linear: bool = False):
    """Fit points as ``(x, C, points, notes)``.

    ``require_linear`` rejects explicit points above the linear-regime bound
    and drops them from an automatic selection; otherwise such points are
    kept and listed in the notes.
    """
    if table.param_name != expected:
        raise FitError(f"table varies {table.param_name!r}, model needs {expected!r}")
    rows = []
    for r in table.select(points):
        v = r.record.max_v_solid
        if r.alpha_max <= 0:
            if points is not None:
                raise FitError(f"fit point {expected}={r.param_value:g} has alpha_max=0")
            continue
        if not (math.isfinite(v) and v > 0):
            raise FitError(f"fit point {expected}={r.param_value:g}, alpha_max="
                           f"{r.alpha_max:g} has max|v_solid|={v!r}")
        if require_linear and v > LINEAR_REGIME_MAX_V:
            if points is None:
                continue
            raise FitError(
                f"fit point {expected}={r.param_value:g}, alpha_max={r.alpha_max:g} has "
                f"max|v_solid|={v:.3g}, outside the linear regime (<= {LINEAR_REGIME_MAX_V:g})"
            )
        rows.append(r)
    if len(rows) < min_points:
        raise FitError(f"need at least {min_points} fit points, got {len(rows)}")
    notes = [f"{expected}={r.param_value:g} alpha_max={r.alpha_max:g}: max|v_solid|="
             f"{r.record.max_v_solid:.3g} above {LINEAR_REGIME_MAX_V:g}"
             for r in rows if r.record.max_v_solid > LINEAR_REGIME_MAX_V]
    x = np.array([r.param_value for r in rows])
    C = np.array([r.leakage_constant for r in rows])
    pts = tuple((r.param_value, r.alpha_max, r.record.max_v_solid) for r in rows)
    return x, C, pts, notes


def _lstsq(basis, C):
    """Least squares with column equilibration."""
    scale = np.abs(basis).max(axis=0)
    scale[scale == 0] = 1.0
    coef, *_ = np.linalg.lstsq(basis / scale, C, rcond=None)
    return coef / scale


def _diagnostics(model_C, C, notes=()):
    resid = C - model_C
    return {
        "notes": list(notes),
        "residuals": [float(r) for r in resid],
        "max_relative_residual": float(np.max(np.abs(resid) / np.abs(C))),
        "points_used": int(len(C)),
    }


def _check_positive(model: FitModel, x):
    grid = np.linspace(x.min(), x.max(), 201)
    if np.any(model.leakage_constant(grid) <= 0):
        raise FitError(f"{model.kind} predicts non-positive alpha_max inside the fitted "
                       f"range [{x.min():g}, {x.max():g}]")


def fit_h_model(table: SweepTable, points=None) -> FitModel:
    """Fit ``C = c1/h^2 + c2/h + c3`` by linear least squares."""
    x, C, pts, notes = _fit_data(table, points, "h", 6, require_linear=True)
    if len(np.unique(x)) < 3:
        raise FitError(f"rank-deficient h basis: need 3 distinct h values, got {len(np.unique(x))}")
    coef = _lstsq(np.column_stack([x**-2, 1 / x, np.ones_like(x)]), C)
    model = FitModel("h_model", tuple(coef), pts)
    model = replace(model, diagnostics=_diagnostics(model.leakage_constant(x), C, notes))
    _check_positive(model, x)
    return model


def fit_linear_model(table: SweepTable, kind: str, points=None) -> FitModel:
    """Fit ``C = c1*x + c2`` for ``mu_model`` or ``vc_model``; the slope must
    be positive."""
    if kind not in ("mu_model", "vc_model"):
        raise ValueError(f"kind must be 'mu_model' or 'vc_model', got {kind!r}")
    x, C, pts, notes = _fit_data(table, points, MODEL_PARAMETER[kind], 4)
    if len(np.unique(x)) < 2:
        raise FitError("need at least 2 distinct parameter values")
    coef = _lstsq(np.column_stack([x, np.ones_like(x)]), C)
    span = x.max() - x.min()
    if coef[0] * span <= 1e-9 * np.abs(C).max():
        raise FitError(f"{kind}: fitted slope {coef[0]:.6g} is not positive; alpha_max "
                       f"should grow with {MODEL_PARAMETER[kind]}")
    model = FitModel(kind, tuple(coef), pts)
    model = replace(model, diagnostics=_diagnostics(model.leakage_constant(x), C, notes))
    _check_positive(model, x)
    return model


def golden_section(f, a, b, tol=1e-10, max_iter=500):
    """Minimize unimodal ``f`` on [a, b]; returns ``(x, f(x))``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _lc_projection(L, C, a2):
    basis = np.column_stack([L**-a2, np.ones_like(L)])
    coef = _lstsq(basis, C)
    return coef, float(np.linalg.norm(basis @ coef - C))


def fit_lc_model(table: SweepTable, points=None, bounds=LC_EXPONENT_BOUNDS,
                 tol: float = 1e-10, n_scan: int = 246) -> FitModel:
    """Fit ``C = a1/L_c^a2 + a3`` by variable projection.

    The exponent is found by a grid scan over ``bounds`` followed by golden
    section in the bracket around the best grid point; ``(a1, a3)`` come from
    linear least squares at each trial exponent.
    """
    L, C, pts, notes = _fit_data(table, points, "L_c", 6)
    if len(np.unique(L)) < 3:
        raise FitError(f"need at least 3 distinct L_c values, got {len(np.unique(L))}")
    lo, hi = bounds
    grid = np.linspace(lo, hi, n_scan)
    res = np.array([_lc_projection(L, C, a)[1] for a in grid])
    if res.max() - res.min() <= 1e-12 * max(np.linalg.norm(C), 1e-300):
        raise FitBoundaryError("lc_model: residual does not depend on the exponent "
                               "(degenerate data, e.g. constant C)")
    i = int(np.argmin(res))
    a2, _ = golden_section(lambda a: _lc_projection(L, C, a)[1],
                           grid[max(i - 1, 0)], grid[min(i + 1, n_scan - 1)], tol)
    edge = 1e-3 * (hi - lo)
    if a2 - lo <= edge or hi - a2 <= edge:
        raise FitBoundaryError(f"lc_model: best exponent {a2:.6g} lies on the search "
                               f"boundary [{lo:g}, {hi:g}]")
    coef, _ = _lc_projection(L, C, a2)
    model = FitModel("lc_model", (coef[0], a2, coef[1]), pts)
    model = replace(model, diagnostics=_diagnostics(model.leakage_constant(L), C, notes))
    _check_positive(model, L)
    return model


def reference_model(kind: str) -> "FitModel":
    return FitModel(kind, REFERENCE_COEFFICIENTS[kind],
                    diagnostics={"notes": ["published coefficients, not fitted here"]})


def default_fit_points(table: SweepTable, kind: str):
    """Smallest, middle and largest parameter values (only the two extremes
    for the linear laws) at alpha_max 1e8 and 1e20, or at the smallest and
    largest positive alpha_max when those are not in the table."""
    values = table.parameter_values
    if kind in ("h_model", "lc_model"):
        picks = [values[0], values[len(values) // 2], values[-1]] if len(values) >= 3 else values
    else:
        picks = [values[0], values[-1]] if len(values) >= 2 else values
    alphas = sorted({r.alpha_max for r in table.rows if r.converged and r.alpha_max > 0})
    if not alphas:
        raise FitError("table has no converged cells with alpha_max > 0")
    wanted = [a for a in DEFAULT_FIT_ALPHAS
              if any(math.isclose(a, b, rel_tol=1e-9) for b in alphas)]
    if len(wanted) < 2:
        wanted = sorted({alphas[0], alphas[-1]})
    return [(v, a) for v in dict.fromkeys(picks) for a in wanted]


def fit_model(table: SweepTable, kind: str, points=None) -> FitModel:
    if kind == "h_model":
        return fit_h_model(table, points)
    if kind == "lc_model":
        return fit_lc_model(table, points)
    return fit_linear_model(table, kind, points)


def predict_alpha_max(model: FitModel, parameter_value: float, q: float) -> float:
    """``alpha_max`` giving ``max|v_solid| = 10**q`` at ``parameter_value``."""
    value = 10.0 ** (-q) * model.leakage_constant(parameter_value)
    if not (math.isfinite(value) and value > 0):
        raise PredictionError(
            f"{model.kind} predicts non-positive alpha_max={value:.6g} at "
            f"{model.parameter}={parameter_value!r}, q={q!r}"
        )
    return value


def alpha_star(alpha, mu, L_c):
    """Dimensionless inverse permeability ``alpha * L_c^2 / mu``."""
    if not (mu > 0 and L_c > 0):
        raise ValueError("mu and L_c must be positive")
    return alpha * L_c**2 / mu


def alpha_from_star(alpha_star_value, mu, L_c):
    if not (mu > 0 and L_c > 0):
        raise ValueError("mu and L_c must be positive")
    return alpha_star_value * mu / L_c**2


def darcy_number(alpha, mu, L_c):
    return 1.0 / alpha_star(alpha, mu, L_c)


# -- validation ------------------------------------------------------------

@dataclass(frozen=True)
class ValidationPoint:
    parameter_value: float
    q: float
    alpha_data: float
    alpha_model: float

    @property
    def abs_error(self):
        return abs(self.alpha_data - self.alpha_model)

    @property
    def rel_error(self):
        return self.abs_error / self.alpha_data


@dataclass
class ValidationReport:
    kind: str
    points: list
    excluded: list

    @property
    def max_error(self):
        return max((p.rel_error for p in self.points), default=float("nan"))

    @property
    def mean_error(self):
        return float(np.mean([p.rel_error for p in self.points])) if self.points else float("nan")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(VALIDATION_COLUMNS)
            for p in self.points:
                w.writerow([self.kind] + [f"{v:.17g}" for v in (
                    p.parameter_value, p.q, p.alpha_data, p.alpha_model, p.abs_error,
                    p.rel_error)])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(VALIDATION_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing validation columns {sorted(missing)}")
            raw = list(reader)
        kinds = {r["model_kind"] for r in raw}
        if len(kinds) != 1:
            raise ValueError(f"{path}: expected one model kind, found {sorted(kinds)}")
        pts = [ValidationPoint(float(r["param_value"]), float(r["q"]), float(r["alpha_data"]),
                               float(r["alpha_model"])) for r in raw]
        return cls(kinds.pop(), pts, [])

    def to_dict(self):
        return {
            "kind": self.kind,
            "max_rel_error": self.max_error,
            "mean_rel_error": self.mean_error,
            "points": [
                {"parameter_value": p.parameter_value, "q": p.q, "alpha_data": p.alpha_data,
                 "alpha_model": p.alpha_model, "rel_error": p.rel_error}
                for p in self.points
            ],
            "excluded": self.excluded,
        }


def _interpolate_alpha(records, q):
    """alpha_max at ``log10 max|v_solid| = q`` by linear interpolation in
    (log10 v, log10 alpha) between the bracketing records."""
    recs = sorted((r for r in records if r.alpha_max > 0 and r.max_v_solid > 0
                   and math.isfinite(r.max_v_solid)), key=lambda r: r.alpha_max)
    for r0, r1 in zip(recs, recs[1:]):
        y0, y1 = math.log10(r0.max_v_solid), math.log10(r1.max_v_solid)
        if min(y0, y1) <= q <= max(y0, y1) and y0 != y1:
            t = (q - y0) / (y1 - y0)
            la = math.log10(r0.alpha_max) + t * (math.log10(r1.alpha_max) - math.log10(r0.alpha_max))
            return 10.0**la
    return None


def validate_fit(model: FitModel, table: SweepTable, qs=None, points=None) -> ValidationReport:
    """Relative alpha_max errors of ``model`` against sweep data.

    Without ``qs`` every selected cell is one check at its own
    ``q = log10 max|v_solid|``.  With ``qs`` the data alpha_max at each q is
    interpolated on the log-log curve of each parameter value.  Cells
    outside the linear regime (max|v_solid| > 1e-2) are excluded.
    """
    if table.param_name != model.parameter:
        raise ValueError(f"table varies {table.param_name!r}, model is for {model.parameter!r}")
    rows = [r for r in table.select(points) if r.alpha_max > 0]
    checked, excluded = [], []
    linear = []
    for r in rows:
        v = r.record.max_v_solid
        if not (math.isfinite(v) and 0 < v <= LINEAR_REGIME_MAX_V):
            excluded.append(f"{model.parameter}={r.param_value:g} alpha_max={r.alpha_max:g}: "
                            f"max|v_solid|={v:.3g} outside the linear regime")
        else:
            linear.append(r)
    if qs is None:
        for r in linear:
            q = math.log10(r.record.max_v_solid)
            checked.append(ValidationPoint(r.param_value, q, r.alpha_max,
                                           predict_alpha_max(model, r.param_value, q)))
    else:
        for value in sorted({r.param_value for r in linear}):
            recs = [r.record for r in linear if r.param_value == value]
            for q in qs:
                a = _interpolate_alpha(recs, q)
                if a is None:
                    excluded.append(f"{model.parameter}={value:g} q={q:g}: not bracketed by data")
                    continue
                checked.append(ValidationPoint(value, q, a, predict_alpha_max(model, value, q)))
    return ValidationReport(model.kind, checked, excluded)
