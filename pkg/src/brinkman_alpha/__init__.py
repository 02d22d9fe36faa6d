"""Q2/Q1 finite elements for Brinkman-penalized steady Navier-Stokes channel
flow, with sweep and calibration tools for the maximum inverse permeability."""

from .analysis import (
    LinearRegion,
    MetricRecord,
    detect_linear_region,
    detect_plateau,
    fluid_state_errors,
    max_solid_velocity,
)
from .calibration import (
    FitModel,
    SweepSpec,
    SweepTable,
    alpha_star,
    fit_h_model,
    fit_lc_model,
    fit_linear_model,
    predict_alpha_max,
    run_sweep,
    validate_fit,
)
from .fem import BrinkmanParams, FlowParams, StateField, alpha_of_rho
from .mesh import GeometrySpec, MeshSpec, Rect, benchmark_geometry, build_mesh, rasterize_density
from .solver import SolveSettings, solve_body_fitted, solve_flow

__version__ = "0.1.0"
