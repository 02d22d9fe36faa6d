import math

import numpy as np
import pytest
import scipy.sparse as sp

from brinkman_alpha.analysis import fluid_state_errors, max_solid_velocity
from brinkman_alpha.fem import BrinkmanParams, FlowParams
from brinkman_alpha.mesh import (
    GeometrySpec,
    MeshSpec,
    Rect,
    benchmark_geometry,
    build_mesh,
    rasterize_density,
)
from brinkman_alpha.solver import (
    DisconnectedFluidError,
    NonConvergenceError,
    SingularSystemError,
    SolveReport,
    SolveSettings,
    _factor_solve,
    body_fitted_masks,
    read_state,
    solve_body_fitted,
    solve_flow,
    write_state,
)


@pytest.fixture(scope="module")
def coarse():
    mesh = build_mesh(MeshSpec(1.0, 1 / 20))
    return mesh, rasterize_density(mesh, benchmark_geometry())


@pytest.fixture(scope="module")
def empty():
    mesh = build_mesh(MeshSpec(1.0, 1 / 20))
    return mesh, np.ones(mesh.n_elements)


def poiseuille_u(y, v_c=1.0, L=1.0):
    return 4.0 * v_c * y * (L - y) / L**2


def test_settings_validation():
    with pytest.raises(ValueError):
        SolveSettings(newton_tol=0.0)
    with pytest.raises(ValueError):
        SolveSettings(max_iters=0)
    with pytest.raises(ValueError):
        SolveSettings(initial_guess="guess")
    with pytest.raises(ValueError):
        SolveSettings(outlet_pressure="weak")


def test_poiseuille(empty):
    mesh, rho = empty
    state, report = solve_flow(mesh, rho, FlowParams(), BrinkmanParams())
    assert report.converged
    x, y = mesh.velocity_nodes.T
    assert np.abs(state.v1 - poiseuille_u(y)).max() < 1e-8
    assert np.abs(state.v2).max() < 1e-8
    out = np.isclose(x, 2.0)
    assert state.v1[out].max() == pytest.approx(1.0, rel=5e-3)
    px = mesh.pressure_nodes[:, 0]
    assert state.p[np.isclose(px, 0.0)].mean() == pytest.approx(16.0, rel=1e-2)
    # linear pressure 8 (2 - x)
    assert np.allclose(state.p, 8.0 * (2.0 - px), atol=1e-8)


def test_poiseuille_scaled_parameters():
    mesh = build_mesh(MeshSpec(0.5, 0.05))
    flow = FlowParams(rho_f=3.0, mu=2.0, v_c=1.5)
    state, _ = solve_flow(mesh, np.ones(mesh.n_elements), flow, BrinkmanParams())
    x, y = mesh.velocity_nodes.T
    assert np.allclose(state.v1, poiseuille_u(y, 1.5, 0.5), atol=1e-9)
    dp = 8.0 * flow.mu * flow.v_c / 0.5**2 * 1.0      # over the 2 L_c length
    assert state.p.max() == pytest.approx(dp, rel=1e-9)


def test_no_penalization_flows_through_solid(coarse):
    mesh, rho = coarse
    state, _ = solve_flow(mesh, rho, FlowParams(), BrinkmanParams(0.0))
    v = max_solid_velocity(state, mesh, rho)
    assert 0.1 < v < 10.0


def test_stokes_limit_one_iteration(coarse):
    mesh, rho = coarse
    _, report = solve_flow(mesh, rho, FlowParams(rho_f=0.0), BrinkmanParams(0.0),
                           SolveSettings(initial_guess="zero"))
    assert report.converged
    assert report.iterations == 1
    assert len(report.residual_history) == 2


def test_converged_report_invariant(coarse):
    mesh, rho = coarse
    _, report = solve_flow(mesh, rho, FlowParams(), BrinkmanParams(1e6))
    assert report.converged
    assert report.final_norm <= 1e-10 * report.reference_norm
    assert len(report.residual_history) == report.iterations + 1


def test_quadratic_convergence(coarse):
    # Re = rho v L / mu = 10
    mesh, rho = coarse
    _, report = solve_flow(mesh, rho, FlowParams(rho_f=10.0), BrinkmanParams(1e4),
                           SolveSettings(initial_guess="zero"))
    r = np.array(report.residual_history) / report.reference_norm
    assert report.iterations >= 3
    assert math.log(r[-1]) / math.log(r[-2]) >= 1.7


def test_non_convergence_carries_history(coarse):
    mesh, rho = coarse
    with pytest.raises(NonConvergenceError) as info:
        solve_flow(mesh, rho, FlowParams(rho_f=10.0), BrinkmanParams(1e4),
                   SolveSettings(max_iters=1, initial_guess="zero"))
    report = info.value.report
    assert not report.converged
    assert len(report.residual_history) == 2


def test_singular_system_names_iteration():
    A = sp.csc_matrix((3, 3))
    with pytest.raises(SingularSystemError, match="iteration 4"):
        _factor_solve(A, np.ones(3), 4, SolveReport())


def test_determinism(coarse):
    mesh, rho = coarse
    a, _ = solve_flow(mesh, rho, FlowParams(), BrinkmanParams(1e8))
    b, _ = solve_flow(mesh, rho, FlowParams(), BrinkmanParams(1e8))
    assert np.array_equal(a.to_vector(), b.to_vector())


def test_dirichlet_values_exact(coarse):
    mesh, rho = coarse
    state, _ = solve_flow(mesh, rho, FlowParams(v_c=2.0), BrinkmanParams(1e3))
    y = mesh.velocity_nodes[mesh.inlet, 1]
    assert np.array_equal(state.v1[mesh.inlet], 2.0 * 4.0 * y * (1.0 - y))
    assert np.all(state.v1[mesh.walls] == 0.0)
    assert np.all(state.p[mesh.outlet_pressure] == 0.0)


def test_body_fitted_all_fluid_matches_flow(empty):
    mesh, rho = empty
    a, _ = solve_flow(mesh, rho, FlowParams(), BrinkmanParams(0.0))
    b, _ = solve_body_fitted(mesh, rho, FlowParams())
    assert np.allclose(a.to_vector(), b.to_vector(), rtol=1e-12, atol=1e-12)


def test_body_fitted_interface_no_slip(coarse):
    mesh, rho = coarse
    state, _ = solve_body_fitted(mesh, rho, FlowParams())
    _, _, solid_v, _, solid_only_p = body_fitted_masks(mesh, rho)
    assert np.all(state.v1[solid_v] == 0.0)
    assert np.all(state.v2[solid_v] == 0.0)
    assert np.all(state.p[solid_only_p] == 0.0)


def edge_flux(mesh, state, x_edge):
    """Integral of v1 along the vertical line x = x_edge (Simpson per element
    edge, exact for the quadratic trace)."""
    x, y = mesh.velocity_nodes.T
    on = np.flatnonzero(np.isclose(x, x_edge))
    on = on[np.argsort(y[on])]
    v = state.v1[on]
    h = mesh.h
    return sum(h / 6.0 * (v[i] + 4 * v[i + 1] + v[i + 2]) for i in range(0, len(v) - 2, 2))


def test_body_fitted_mass_flux_natural_outlet(coarse):
    mesh, rho = coarse
    state, _ = solve_body_fitted(mesh, rho, FlowParams(), SolveSettings(outlet_pressure="natural"))
    fin, fout = edge_flux(mesh, state, 0.0), edge_flux(mesh, state, 2.0)
    assert fin == pytest.approx(2.0 / 3.0, rel=1e-12)
    assert abs(fin - fout) / abs(fin) < 1e-10


def test_body_fitted_mass_flux_strong_outlet():
    # Fixing p at the outlet nodes drops their continuity equations, so
    # global conservation only holds up to a discretization error.
    gaps = []
    for h in (1 / 20, 1 / 40):
        mesh = build_mesh(MeshSpec(1.0, h))
        rho = rasterize_density(mesh, benchmark_geometry())
        state, _ = solve_body_fitted(mesh, rho, FlowParams())
        fin, fout = edge_flux(mesh, state, 0.0), edge_flux(mesh, state, 2.0)
        gaps.append(abs(fin - fout) / fin)
    assert gaps[0] < 1e-3
    assert gaps[1] < gaps[0] / 4


def test_natural_outlet_poiseuille(empty):
    mesh, rho = empty
    state, _ = solve_flow(mesh, rho, FlowParams(), BrinkmanParams(),
                          SolveSettings(outlet_pressure="natural"))
    y = mesh.velocity_nodes[:, 1]
    assert np.abs(state.v1 - poiseuille_u(y)).max() < 1e-8
    assert np.allclose(state.p, 8.0 * (2.0 - mesh.pressure_nodes[:, 0]), atol=1e-8)


def test_disconnected_fluid():
    mesh = build_mesh(MeshSpec(1.0, 0.1))
    rho = rasterize_density(mesh, GeometrySpec(1.0, (Rect(0.8, 0.0, 0.2, 1.0, "wall"),)))
    with pytest.raises(DisconnectedFluidError):
        solve_body_fitted(mesh, rho, FlowParams())


def test_body_fitted_needs_discrete_density(coarse):
    mesh, _ = coarse
    with pytest.raises(ValueError):
        solve_body_fitted(mesh, np.full(mesh.n_elements, 0.5), FlowParams())


def test_brinkman_approaches_body_fitted(coarse):
    mesh, rho = coarse
    ref, _ = solve_body_fitted(mesh, rho, FlowParams())
    errs = []
    for a in (1e2, 1e4, 1e6, 1e8, 1e10):
        s, _ = solve_flow(mesh, rho, FlowParams(), BrinkmanParams(a))
        errs.append(fluid_state_errors(s, ref, mesh, rho))
    ev, ep = np.array(errs).T
    assert np.all(np.diff(ev) < 0) and np.all(np.diff(ep) < 0)
    assert ev[-1] < 1e-4


def test_state_export_roundtrip(coarse, tmp_path):
    mesh, rho = coarse
    state, _ = solve_flow(mesh, rho, FlowParams(), BrinkmanParams(1e4))
    vp, pp = tmp_path / "v.txt", tmp_path / "p.txt"
    write_state(state, mesh, vp, pp)
    head = vp.read_text().splitlines()[:2]
    assert head[0] == "node x y v1 v2"
    assert len(head[1].split()) == 5
    assert pp.read_text().splitlines()[0] == "node x y p"
    back = read_state(mesh, vp, pp)
    assert np.array_equal(back.to_vector(), state.to_vector())
