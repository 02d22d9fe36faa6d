import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brinkman_alpha.analysis import MetricRecord, detect_linear_region
from brinkman_alpha.calibration import (
    REFERENCE_COEFFICIENTS,
    FitBoundaryError,
    FitError,
    FitModel,
    PredictionError,
    SweepError,
    SweepRow,
    SweepSpec,
    SweepTable,
    alpha_from_star,
    alpha_star,
    darcy_number,
    default_fit_points,
    fit_h_model,
    fit_lc_model,
    fit_linear_model,
    golden_section,
    predict_alpha_max,
    reference_model,
    run_sweep,
    validate_fit,
)
from brinkman_alpha.fem import FlowParams
from brinkman_alpha.solver import SolveSettings

H_VALUES = [1 / 30, 1 / 50, 1 / 70]
LC_VALUES = [0.5, 1.0, 2.0, 3.0, 5.0]


def synthetic(name, values, law, alphas=(1e8, 1e20)):
    rows = [SweepRow(name, x, MetricRecord(a, law(x) / a), True, 2)
            for x in values for a in alphas]
    return SweepTable(name, rows)


def rel(a, b):
    return np.abs(np.asarray(a) - np.asarray(b)) / np.abs(np.asarray(b))


# -- fit round trips ---------------------------------------------------------

def test_h_model_roundtrip_published():
    c = REFERENCE_COEFFICIENTS["h_model"]
    table = synthetic("h", H_VALUES, lambda h: c[0] / h**2 + c[1] / h + c[2])
    m = fit_h_model(table)
    assert rel(m.coefficients, c).max() < 1e-6
    assert m.diagnostics["points_used"] == 6


def test_mu_model_roundtrip_published():
    c = REFERENCE_COEFFICIENTS["mu_model"]
    table = synthetic("mu", [0.5, 5.0], lambda x: c[0] * x + c[1], (1e10, 1e20))
    m = fit_linear_model(table, "mu_model")
    assert rel(m.coefficients, c).max() < 1e-6


def test_vc_model_roundtrip_published():
    c = REFERENCE_COEFFICIENTS["vc_model"]
    table = synthetic("v_c", [0.5, 5.0], lambda x: c[0] * x + c[1], (1e10, 1e20))
    m = fit_linear_model(table, "vc_model")
    assert rel(m.coefficients, c).max() < 1e-6


@pytest.mark.parametrize("a2", [REFERENCE_COEFFICIENTS["lc_model"][1], 2.0])
def test_lc_model_roundtrip(a2):
    a1, _, a3 = REFERENCE_COEFFICIENTS["lc_model"]
    table = synthetic("L_c", LC_VALUES, lambda L: a1 / L**a2 + a3)
    m = fit_lc_model(table)
    assert m.coefficients[1] == pytest.approx(a2, abs=1e-4)
    assert rel(m.coefficients, (a1, a2, a3)).max() < 1e-6


@settings(max_examples=25, deadline=None)
@given(c1=st.floats(1.0, 1e3), c2=st.floats(1e2, 1e5), c3=st.floats(-1e3, 1e5))
def test_h_model_roundtrip_property(c1, c2, c3):
    table = synthetic("h", H_VALUES, lambda h: c1 / h**2 + c2 / h + c3, (1e10, 1e20))
    m = fit_h_model(table)
    assert np.allclose(m.coefficients, (c1, c2, c3), rtol=1e-6, atol=1e-6 * c2)


@settings(max_examples=25, deadline=None)
@given(a1=st.floats(1e4, 1e7), a2=st.floats(0.2, 2.3), a3=st.floats(0.0, 1e5))
def test_lc_model_roundtrip_property(a1, a2, a3):
    table = synthetic("L_c", LC_VALUES, lambda L: a1 / L**a2 + a3)
    m = fit_lc_model(table)
    assert m.coefficients[1] == pytest.approx(a2, rel=1e-6)
    assert m.coefficients[0] == pytest.approx(a1, rel=1e-6)
    assert m.coefficients[2] == pytest.approx(a3, rel=1e-6, abs=1e-6 * a1)


def test_h_model_rank_deficient():
    table = synthetic("h", [1 / 30, 1 / 50], lambda h: 1e4 / h, (1e8, 1e10, 1e20))
    with pytest.raises(FitError, match="rank-deficient"):
        fit_h_model(table)


def test_h_model_rejects_nonlinear_points():
    table = synthetic("h", H_VALUES, lambda h: 1e7 / h, (1e8, 1e20))
    pts = [(h, a) for h in H_VALUES for a in (1e8, 1e20)]
    with pytest.raises(FitError, match="linear regime"):
        fit_h_model(table, pts)


def test_linear_model_constant_fails():
    table = synthetic("mu", [0.5, 5.0], lambda x: 5e5 + 0 * x, (1e10, 1e20))
    with pytest.raises(FitError, match="slope"):
        fit_linear_model(table, "mu_model")


def test_linear_model_negative_slope_fails():
    table = synthetic("v_c", [0.5, 5.0], lambda x: 1e6 - 1e5 * x, (1e10, 1e20))
    with pytest.raises(FitError):
        fit_linear_model(table, "vc_model")


def test_lc_model_constant_is_boundary_failure():
    table = synthetic("L_c", LC_VALUES, lambda L: 5e5 + 0 * L)
    with pytest.raises(FitBoundaryError):
        fit_lc_model(table)


def test_lc_model_exponent_outside_interval():
    table = synthetic("L_c", LC_VALUES, lambda L: 1e5 / L**3.5 + 1e3)
    with pytest.raises(FitBoundaryError):
        fit_lc_model(table)


def test_wrong_table_parameter():
    table = synthetic("mu", [0.5, 5.0], lambda x: x)
    with pytest.raises(FitError):
        fit_h_model(table)


def test_golden_section_minimizes():
    x, fx = golden_section(lambda t: (t - 0.6073) ** 2, 0.05, 2.5, 1e-12)
    assert x == pytest.approx(0.6073, abs=1e-9)


# -- predictions -------------------------------------------------------------

def test_predict_published_h_model():
    m = reference_model("h_model")
    assert predict_alpha_max(m, 1 / 100, -6) == pytest.approx(9.9631e11, rel=1e-12)
    expected = 1e12 * (31.32 * 900 + 7635 * 30 - 8.039e4)
    assert predict_alpha_max(m, 1 / 30, -12) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(1.764e17, rel=5e-3)


def test_predict_vc_non_positive():
    m = reference_model("vc_model")
    assert 1.034e6 * 0.0218 > 2.253e4 > 1.034e6 * 0.02
    with pytest.raises(PredictionError, match="vc_model"):
        predict_alpha_max(m, 0.02, -6)
    assert predict_alpha_max(m, 0.0218, -6) > 0


@pytest.mark.parametrize("kind", sorted(REFERENCE_COEFFICIENTS))
def test_q_scaling(kind):
    m = reference_model(kind)
    x = {"h_model": 0.01, "mu_model": 2.0, "lc_model": 1.5, "vc_model": 2.0}[kind]
    assert predict_alpha_max(m, x, -1) / predict_alpha_max(m, x, 0) == pytest.approx(10.0, rel=1e-15)
    r = predict_alpha_max(m, x, -12) / predict_alpha_max(m, x, -4)
    assert r == pytest.approx(1e8, rel=1e-14)


def test_alpha_star():
    assert alpha_star(1e6, 1.0, 1.0) == 1e6
    assert alpha_star(1e6, 2.0, 1.0) == 5e5
    assert darcy_number(1e6, 2.0, 1.0) == pytest.approx(2e-6)
    assert alpha_from_star(alpha_star(3e7, 0.7, 2.5), 0.7, 2.5) == pytest.approx(3e7)
    with pytest.raises(ValueError):
        alpha_star(1.0, 0.0, 1.0)


def test_fit_model_json_roundtrip(tmp_path):
    table = synthetic("h", H_VALUES, lambda h: 30 / h**2 + 7000 / h - 5e4)
    m = fit_h_model(table)
    path = tmp_path / "model.json"
    m.write(path)
    back = FitModel.read(path)
    assert back.kind == m.kind and back.coefficients == m.coefficients
    assert back.fit_points == m.fit_points


def test_fit_model_validates_coefficients():
    with pytest.raises(ValueError):
        FitModel("h_model", (1.0, 2.0))
    with pytest.raises(ValueError):
        FitModel("k_model", (1.0, 2.0))


# -- validation --------------------------------------------------------------

def test_validate_exact_model_zero_error():
    m = reference_model("h_model")
    table = synthetic("h", [1 / 30, 1 / 40, 1 / 50], m.leakage_constant, (1e8, 1e10, 1e14, 1e20))
    rep = validate_fit(m, table)
    assert len(rep.points) == 12
    assert rep.max_error < 1e-12
    rep = validate_fit(m, table, qs=[-5, -8, -11])
    assert len(rep.points) == 9
    assert rep.max_error < 1e-12


def test_validate_interpolates_in_log_log():
    # q halfway between two records in log v lands halfway in log alpha
    m = FitModel("mu_model", (1e5, 0.0))
    rows = [SweepRow("mu", 1.0, MetricRecord(1e8, 1e5 / 1e8), True, 2),
            SweepRow("mu", 1.0, MetricRecord(1e10, 1e5 / 1e10), True, 2)]
    rep = validate_fit(m, SweepTable("mu", rows), qs=[-4])
    p = rep.points[0]
    assert p.alpha_data == pytest.approx(1e9, rel=1e-12)
    assert p.rel_error < 1e-12


def test_validate_excludes_nonlinear_points():
    m = FitModel("mu_model", (1e6, 0.0))
    table = synthetic("mu", [1.0], m.leakage_constant, (1e6, 1e12))
    rep = validate_fit(m, table)
    assert len(rep.points) == 1
    assert len(rep.excluded) == 1 and "linear regime" in rep.excluded[0]


def test_validation_csv_roundtrip(tmp_path):
    m = reference_model("h_model")
    table = synthetic("h", [1 / 30, 1 / 40], lambda h: 1.01 * m.leakage_constant(h))
    rep = validate_fit(m, table)
    assert rep.max_error == pytest.approx(0.01 / 1.01, rel=1e-9)
    path = tmp_path / "v.csv"
    rep.write_csv(path)
    back = type(rep).read_csv(path)
    assert back.kind == "h_model"
    assert [p.alpha_data for p in back.points] == [p.alpha_data for p in rep.points]


# -- sweep tables ------------------------------------------------------------

def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("h", [], [1e8])
    with pytest.raises(ValueError):
        SweepSpec("h", [0.1, 0.05], [1e8])
    with pytest.raises(ValueError):
        SweepSpec("h", [0.1], [1e8, 1e8])
    with pytest.raises(ValueError):
        SweepSpec("nu", [0.1], [1e8])
    with pytest.raises(ValueError):
        SweepSpec("L_c", [1.0], [1e8], lc_mesh="other")
    with pytest.raises(ValueError):
        SweepSpec("h", [0.013], [1e8])


def test_sweep_spec_defaults():
    s = SweepSpec("mu", [1.0], [0.0])
    assert s.flow == FlowParams(1.0, 1.0, 1.0)
    assert (s.L_c, s.h, s.alpha_min) == (1.0, 0.01, 0.0)


def test_sweep_spec_lc_mesh_modes():
    scaled = SweepSpec("L_c", [0.5, 2.0], [1e8])
    fixed = SweepSpec("L_c", [0.5, 2.0], [1e8], h=0.05, lc_mesh="fixed")
    m, g, _ = scaled.case(2.0)
    assert m.h == pytest.approx(0.02) and m.nx * m.ny == 20_000
    assert g.solid("beam").height == pytest.approx(1.0)
    m, _, _ = fixed.case(2.0)
    assert m.h == 0.05 and m.nx == 80


def test_singleton_sweep():
    table = run_sweep(SweepSpec("h", [0.1], [1e6], h=0.1))
    assert len(table) == 1
    r = table.rows[0]
    assert r.converged and r.record.max_v_solid > 0
    assert np.isfinite(r.record.err_v) and np.isfinite(r.record.err_p)


def test_sweep_failure_marker_and_csv(tmp_path):
    spec = SweepSpec("rho_f", [1.0, 200.0], [1e4], h=0.1,
                     settings=SolveSettings(max_iters=2), reference=False)
    table = run_sweep(spec)
    assert [r.converged for r in table.rows] == [True, False]
    bad = table.rows[1]
    assert math.isnan(bad.record.max_v_solid)
    path = tmp_path / "sweep.csv"
    table.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == ("param_name,param_value,alpha_max,max_v_solid,err_v_pct,err_p_pct,"
                        "converged,newton_iters")
    assert lines[2].split(",")[6] == "false"
    back = SweepTable.read_csv(path)
    assert [r.converged for r in back.rows] == [True, False]
    assert back.rows[0].record.max_v_solid == table.rows[0].record.max_v_solid


def test_sweep_all_failed():
    spec = SweepSpec("rho_f", [200.0], [1e4], h=0.1,
                     settings=SolveSettings(max_iters=1), reference=False)
    with pytest.raises(SweepError):
        run_sweep(spec)


def test_sweep_parallel_matches_serial(tmp_path):
    spec = SweepSpec("mu", [0.5, 2.0], [0.0, 1e6], h=0.1)
    a, b = run_sweep(spec, 1), run_sweep(spec, 2)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_csv(pa)
    b.write_csv(pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_alpha_zero_rows_kept_but_not_fitted():
    c = REFERENCE_COEFFICIENTS["h_model"]
    law = lambda h: c[0] / h**2 + c[1] / h + c[2]  # noqa: E731
    table = synthetic("h", H_VALUES, law)
    table = SweepTable("h", table.rows + [SweepRow("h", h, MetricRecord(0.0, 0.9), True, 2)
                                          for h in H_VALUES])
    assert len(table) == 9
    assert fit_h_model(table).diagnostics["points_used"] == 6


def test_default_fit_points():
    table = synthetic("h", [1 / 70, 1 / 60, 1 / 50, 1 / 40, 1 / 30], lambda h: 1e3 / h**2,
                      (1e6, 1e8, 1e14, 1e20))
    pts = default_fit_points(table, "h_model")
    assert pts == [(1 / 70, 1e8), (1 / 70, 1e20), (1 / 50, 1e8), (1 / 50, 1e20),
                   (1 / 30, 1e8), (1 / 30, 1e20)]
    assert len(default_fit_points(table, "mu_model")) == 4


def test_leakage_constant_flat_in_linear_region():
    spec = SweepSpec("h", [1 / 20], [10.0**k for k in range(6, 16)], h=1 / 20, reference=False)
    table = run_sweep(spec)
    recs = table.records(1 / 20)
    reg = detect_linear_region(recs)
    C = np.array([r.alpha_max * r.max_v_solid for r in recs[reg.start:reg.stop]])
    assert np.log10(C.max() / C.min()) < 2 * 0.02


@pytest.mark.slow
def test_lc_fixed_mesh_gives_sublinear_exponent():
    # holding h fixed while L_c grows is what makes the fitted exponent sublinear
    spec = SweepSpec("L_c", (0.5, 1.0, 2.0, 3.0, 5.0), (1e8, 1e20), h=0.05, lc_mesh="fixed",
                     reference=False)
    model = fit_lc_model(run_sweep(spec))
    assert 0.3 < model.coefficients[1] < 1.0
