"""Benchmark metrics: leakage velocity in the solid, fluid-region errors
against the body-fitted reference, and the log-log regimes of a sweep."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .fem import StateField
from .mesh import Mesh
from .solver import body_fitted_masks

LINEAR_RESIDUAL_DECADES = 0.02
PLATEAU_CHANGE_PER_DECADE = 0.05
METRIC_COLUMNS = ("alpha_max", "max_v_solid", "err_v_pct", "err_p_pct")


class UndefinedMetricError(ValueError):
    pass


class LinearRegionError(ValueError):
    pass


@dataclass(frozen=True)
class MetricRecord:
    alpha_max: float
    max_v_solid: float
    err_v: float = float("nan")
    err_p: float = float("nan")


@dataclass(frozen=True)
class LinearRegion:
    """Records ``start:stop`` of the positive-alpha, sorted sweep lie on
    ``log10 v = slope * log10 alpha + intercept``."""

    start: int
    stop: int
    slope: float
    intercept: float
    alpha_range: tuple = (float("nan"), float("nan"))
    max_residual: float = float("nan")

    def __len__(self):
        return self.stop - self.start


def max_solid_velocity(state: StateField, mesh: Mesh, density) -> float:
    """Max speed over velocity nodes touching at least one solid element
    (interface nodes included)."""
    _, _, solid_v, _, _ = body_fitted_masks(mesh, density)
    if not solid_v.any():
        raise UndefinedMetricError("no solid elements: leakage velocity is undefined")
    state.check(mesh)
    return float(state.speed()[solid_v].max())


def fluid_state_errors(state: StateField, reference: StateField, mesh: Mesh, density):
    """Max absolute relative errors (percent) of speed and pressure over
    nodes touched only by fluid elements.

    Errors are normalized by the largest reference magnitude over the same
    nodes rather than pointwise.
    """
    state.check(mesh)
    try:
        reference.check(mesh)
    except ValueError as exc:
        raise ValueError(f"reference does not match the mesh: {exc}") from exc
    _, fluid_v, _, fluid_p, _ = body_fitted_masks(mesh, density)

    def err(x, ref):
        scale = np.abs(ref).max() if ref.size else 0.0
        if scale == 0.0:
            return 0.0 if np.array_equal(x, ref) else float("inf")
        return float(np.abs(x - ref).max() / scale * 100.0)

    err_v = err(state.speed()[fluid_v], reference.speed()[fluid_v])
    err_p = err(state.p[fluid_p], reference.p[fluid_p])
    return err_v, err_p


def _positive_sorted(records, fields):
    recs = [r for r in records
            if all(math.isfinite(getattr(r, f)) and getattr(r, f) > 0 for f in fields)]
    return sorted(recs, key=lambda r: r.alpha_max)


def detect_linear_region(records, tol: float = LINEAR_RESIDUAL_DECADES,
                         min_length: int = 3) -> LinearRegion:
    """Longest run ending at the largest alpha_max whose least-squares line
    in (log10 alpha_max, log10 max_v_solid) fits every point within ``tol``
    decades.  Indices refer to the sorted records with positive alpha_max
    and max_v_solid."""
    recs = _positive_sorted(records, ("alpha_max", "max_v_solid"))
    if len(recs) < 5:
        raise LinearRegionError(f"need at least 5 positive records, got {len(recs)}")
    x = np.log10([r.alpha_max for r in recs])
    y = np.log10([r.max_v_solid for r in recs])
    n = len(recs)
    for start in range(n - min_length + 1):
        xs, ys = x[start:], y[start:]
        slope, intercept = np.polyfit(xs, ys, 1)
        resid = np.abs(ys - (slope * xs + intercept))
        if resid.max() < tol:
            return LinearRegion(
                start, n, float(slope), float(intercept),
                (recs[start].alpha_max, recs[-1].alpha_max), float(resid.max()),
            )
    raise LinearRegionError(f"no run of {min_length} or more points is linear within {tol} decades")


def detect_plateau(records, rel_change: float = PLATEAU_CHANGE_PER_DECADE,
                   min_points: int = 3):
    """Smallest swept alpha_max from which both fluid errors change by less
    than ``rel_change`` (relative, per decade) between every pair of
    consecutive records up to the end of the sweep.  ``None`` when no such
    stretch of at least ``min_points`` records exists."""
    recs = [r for r in records
            if r.alpha_max > 0 and math.isfinite(r.err_v) and math.isfinite(r.err_p)]
    recs.sort(key=lambda r: r.alpha_max)
    if len(recs) < 5:
        raise ValueError(f"need at least 5 records with finite errors, got {len(recs)}")

    def change(a, b, decades):
        if a == b:
            return 0.0
        if a == 0.0:
            return math.inf
        return abs(b - a) / abs(a) / decades

    ok = []
    for r0, r1 in zip(recs, recs[1:]):
        dec = math.log10(r1.alpha_max) - math.log10(r0.alpha_max)
        ok.append(change(r0.err_v, r1.err_v, dec) < rel_change
                  and change(r0.err_p, r1.err_p, dec) < rel_change)
    k = len(ok)
    while k > 0 and ok[k - 1]:
        k -= 1
    if len(recs) - k < min_points:
        return None
    return recs[k].alpha_max


def write_metrics_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in records:
            w.writerow([f"{r.alpha_max:.17g}", f"{r.max_v_solid:.17g}",
                        f"{r.err_v:.17g}", f"{r.err_p:.17g}"])


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [MetricRecord(float(r["alpha_max"]), float(r["max_v_solid"]),
                         float(r["err_v_pct"]), float(r["err_p_pct"])) for r in rows]
