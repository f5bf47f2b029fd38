import math

import numpy as np
import pytest

from lis_crlb.src import closed_form as cf
from lis_crlb.src.closed_form import (TAYLOR_SWITCH, asymptotics, cpl_information,
                                      crlb_approx_noncpl, crlb_cpl_closed, crlb_farfield_approx,
                                      crlb_phase_cpl_closed, crlb_phase_schur, f_functions,
                                      fisher_cpl_closed, fisher_cpl_g_route, phase_regime,
                                      phase_smalltau_approx, property2_parameters)
from lis_crlb.src.fisher import crlb_from_fisher, fisher_numeric
from lis_crlb.src.geometry import Panel, Scenario, Terminal

LAM = 0.1

F_NAMES = ('f1', 'f2', 'f3', 'f4', 'f5', 'f6', 'f7', 'f8', 'f9', 'f3_printed')


def test_f_function_values():
    f = f_functions(3.0)
    assert f.f4 == pytest.approx(0.875, rel=1e-15)
    assert f.f2 == pytest.approx(0.3125, rel=1e-15)
    assert f.f3 == pytest.approx(4 - 49 / 32, rel=1e-15)
    assert f.f3_printed == pytest.approx(13 - 58 / 32, rel=1e-15)
    assert f_functions(1.0).f7 == pytest.approx(1 - 1 / math.sqrt(2), rel=1e-15)


def test_f_functions_direct_forms():
    # forms written out in tau; fine at moderate tau where nothing cancels
    for tau in (0.3, 2.0, 50.0):
        f = f_functions(tau)
        s = 1 + tau
        assert f.f2 == pytest.approx((1 - 1 / math.sqrt(s)) ** 2 * (1 + 0.5 / math.sqrt(s)), rel=1e-13)
        assert f.f4 == pytest.approx(1 - 1 / s ** 1.5, rel=1e-13)
        assert f.f7 == pytest.approx(1 - 1 / math.sqrt(s), rel=1e-13)
        assert f.f3 == pytest.approx(4 - (4 + 5 * tau ** 2) / s ** 2.5, rel=1e-13)
        assert f.f3 == pytest.approx(4 * f.f5, rel=1e-15)
        assert f.f6 == pytest.approx(f.f7 ** 3, rel=1e-15)


def test_small_tau_limits():
    f = f_functions(1e-6)
    assert f.f2 / 1e-12 == pytest.approx(3 / 8, rel=1e-5)
    assert f.f4 / 1e-6 == pytest.approx(3 / 2, rel=1e-5)
    assert f.f3 / 1e-6 == pytest.approx(10, rel=1e-5)


@pytest.mark.parametrize("name", F_NAMES)
def test_series_and_closed_forms_meet(name):
    below = getattr(f_functions(TAYLOR_SWITCH * (1 - 1e-9)), name)
    above = getattr(f_functions(TAYLOR_SWITCH * (1 + 1e-9)), name)
    assert below == pytest.approx(above, rel=1e-8)


def test_f_functions_reject_nonpositive():
    with pytest.raises(ValueError):
        f_functions(0.0)


@pytest.fixture(scope='module')
def cpl_numeric():
    return fisher_numeric(Scenario(Terminal(0, 0, 4), (Panel(1.0),), LAM))


def test_cpl_closed_structure():
    F = fisher_cpl_closed(4.0, 1.0, LAM).entries
    assert F[0, 0] == F[1, 1]
    assert np.count_nonzero(F - np.diag(np.diag(F))) == 0


def test_cpl_closed_matches_quadrature(cpl_numeric):
    closed = np.diag(fisher_cpl_closed(4.0, 1.0, LAM).entries)
    np.testing.assert_allclose(np.diag(cpl_numeric.entries), closed, rtol=1e-6)


@pytest.mark.parametrize("z0, R", [(2.0, 0.5), (4.0, 2.0), (8.0, 1.0), (1.0, 30.0)])
def test_g_route_agrees(z0, R):
    i_xy, i_z = cpl_information(z0, R, LAM)
    g_xy, g_z = fisher_cpl_g_route(z0, R, LAM)
    assert g_xy == pytest.approx(i_xy, rel=1e-9)
    assert g_z == pytest.approx(i_z, rel=1e-9)
    assert fisher_cpl_closed(z0, R, LAM).diagnostics['g_route_rel_diff'] < 1e-9


def test_printed_coefficients_are_reported():
    diag = fisher_cpl_closed(4.0, 1.0, LAM).diagnostics
    i_xy, i_z = cpl_information(4.0, 1.0, LAM)
    assert diag['i_xy_printed_coefficient'] > i_xy
    assert diag['i_z_printed_f3'] > i_z


def test_crlb_cpl_closed_noise_linearity():
    base = crlb_cpl_closed(4.0, 1.0, LAM)
    for k in (0.5, 2.0, 10.0):
        scaled = crlb_cpl_closed(4.0, 1.0, LAM, n0=2.0 * k)
        np.testing.assert_allclose(scaled.as_array(), k * base.as_array(), rtol=1e-13)


def test_approx_is_exact_on_cpl():
    exact = crlb_cpl_closed(4.0, 1.0, LAM)
    approx = crlb_approx_noncpl(Terminal(0, 0, 4), 1.0, LAM)
    np.testing.assert_allclose(approx.as_array(), exact.as_array(), rtol=1e-12)


def test_approx_xy_symmetric_and_direct_form():
    report = crlb_approx_noncpl(Terminal(3.0, 1.0, 8.0), 0.5, LAM)
    assert report.c_x == pytest.approx(report.c_y, rel=1e-12)
    assert report.diagnostics['direct_form_rel_diff'] < 1e-9
    alpha, beta = property2_parameters(Terminal(3.0, 1.0, 8.0), 0.5, LAM)
    assert report.c_x == pytest.approx(1 / alpha, rel=1e-9)


@pytest.mark.parametrize("x0, tol_xy, tol_z", [(1.0, 0.001, 0.02), (4.0, 0.004, 0.02),
                                               (8.0, 0.006, 0.02)])
def test_approx_error_against_quadrature(x0, tol_xy, tol_z):
    t = Terminal(x0, x0, 8.0)
    numeric = crlb_from_fisher(fisher_numeric(Scenario(t, (Panel(0.5),), LAM)))
    approx = crlb_approx_noncpl(t, 0.5, LAM)
    assert approx.c_x == pytest.approx(numeric.c_x, rel=tol_xy)
    assert approx.c_y == pytest.approx(numeric.c_y, rel=tol_xy)
    assert approx.c_z == pytest.approx(numeric.c_z, rel=tol_z)


def test_approx_warns_outside_mild_conditions(caplog):
    report = crlb_approx_noncpl(Terminal(1.0, 0.0, 1.0), 0.9, 0.5)
    assert not report.diagnostics['mild_conditions']
    assert 'mild conditions violated' in caplog.text


def test_farfield_on_cpl():
    z0, R = 4.0, 0.4
    tau = (R / z0) ** 2
    report = crlb_farfield_approx(Terminal(0, 0, z0), R, LAM)
    assert report.c_x == pytest.approx(4 * LAM ** 2 / (math.pi ** 2 * tau ** 2), rel=1e-12)
    assert report.c_z == pytest.approx(LAM ** 2 / (math.pi ** 2 * tau), rel=1e-12)


def test_farfield_slope():
    taus = np.geomspace(1e-4, 1e-2, 5)
    c = [crlb_farfield_approx(Terminal(1, 0, 4), 4 * math.sqrt(t), LAM).c_x for t in taus]
    assert np.polyfit(np.log(taus), np.log(c), 1)[0] == pytest.approx(-2, abs=1e-9)


def test_farfield_against_quadrature():
    t = Terminal(2.0, 0.0, 4.0)
    numeric = crlb_from_fisher(fisher_numeric(Scenario(t, (Panel(0.4),), LAM)))
    approx = crlb_farfield_approx(t, 0.4, LAM)
    for name in ('c_x', 'c_y', 'c_z'):
        assert getattr(approx, name) == pytest.approx(getattr(numeric, name), rel=0.05)


def test_farfield_warns_above_tau_max(caplog):
    crlb_farfield_approx(Terminal(0, 0, 1), 0.5, 0.01)
    assert 'far-field' in caplog.text


def test_unknown_phase_never_helps():
    for tau in np.geomspace(1e-5, 1e5, 21):
        R = 4 * math.sqrt(tau)
        assert crlb_phase_cpl_closed(4.0, R, LAM).c_z >= crlb_cpl_closed(4.0, R, LAM).c_z


def test_unknown_phase_limits():
    tau = 1e6
    R = 4 * math.sqrt(tau)
    report = crlb_phase_cpl_closed(4.0, R, LAM)
    known = crlb_cpl_closed(4.0, R, LAM)
    assert report.c_z / known.c_z == pytest.approx(4, rel=0.02)
    assert report.c_phase == pytest.approx(8, rel=0.01)
    assert report.c_x == pytest.approx(known.c_x, rel=1e-12)


@pytest.mark.parametrize("tau", [1e-6, 1e-4, 1e-2, 0.05, 0.5, 5.0, 50.0])
def test_phase_schur_route_agrees(tau, caplog):
    report = crlb_phase_cpl_closed(4.0, 4 * math.sqrt(tau), LAM)
    assert report.diagnostics['schur_route_rel_diff'] < 1e-9
    assert 'Schur route disagree' not in caplog.text


def test_phase_schur_route_mismatch_warns(monkeypatch, caplog):
    i33 = cf.cpl_i33_g_route
    monkeypatch.setattr(cf, 'cpl_i33_g_route', lambda *args: 2 * i33(*args))
    report = crlb_phase_cpl_closed(4.0, 1.0, LAM)
    assert report.diagnostics['schur_route_rel_diff'] > 0.1
    assert 'Schur route disagree' in caplog.text


@pytest.fixture(scope='module')
def cpl_numeric_phase():
    return fisher_numeric(Scenario(Terminal(0, 0, 4), (Panel(1.0),), LAM, phase_unknown=True))


def test_phase_closed_matches_quadrature(cpl_numeric_phase):
    closed = crlb_phase_cpl_closed(4.0, 1.0, LAM)
    numeric = crlb_from_fisher(cpl_numeric_phase)
    assert numeric.c_z == pytest.approx(closed.c_z, rel=1e-6)
    assert numeric.c_phase == pytest.approx(closed.c_phase, rel=1e-6)
    assert numeric.matrix[2, 3] == pytest.approx(closed.matrix[2, 3], rel=1e-6)


def test_cpl_c_z_is_two_by_two_schur_form(cpl_numeric_phase):
    F = cpl_numeric_phase.entries
    expected = F[3, 3] / (F[2, 2] * F[3, 3] - F[2, 3] ** 2)
    assert crlb_from_fisher(cpl_numeric_phase).c_z == pytest.approx(expected, rel=1e-9)


def test_schur_elimination_matches_full_inverse():
    fisher = fisher_numeric(Scenario(Terminal(1.0, 0.5, 4.0), (Panel(1.0),), LAM,
                                     phase_unknown=True))
    full = crlb_from_fisher(fisher)
    schur = crlb_phase_schur(fisher)
    np.testing.assert_allclose(schur.matrix, full.matrix, rtol=1e-7,
                               atol=1e-9 * np.max(np.abs(full.matrix)))


def test_schur_needs_phase_row():
    with pytest.raises(ValueError):
        crlb_phase_schur(fisher_cpl_closed(4.0, 1.0, LAM))


def test_small_tau_phase_approximation():
    tau = 1e-3
    closed = crlb_phase_cpl_closed(4.0, 4 * math.sqrt(tau), LAM)
    c_z, c_phase = phase_smalltau_approx(tau, LAM, 4.0)
    assert c_z == pytest.approx(closed.c_z, rel=0.05)
    assert c_phase == pytest.approx(closed.c_phase, rel=0.05)


def test_asymptotics_constants():
    a = asymptotics(1.0, LAM, 4.0)
    assert a.limit == pytest.approx(1.5198e-3, rel=1e-4)
    assert a.phase_ratio == pytest.approx(3947.8, rel=1e-4)
    assert a.limit_z_phase_unknown == pytest.approx(4 * a.limit, rel=1e-15)
    assert a.phase_regime == 'known'
    assert asymptotics(1e-3, 0.01, 4.0).c_z_linear == asymptotics(1e-3, 0.5, 4.0).c_z_linear


def test_phase_regimes():
    assert phase_regime(1e-6, 0.01, 40.0) == 'linear'
    assert phase_regime(5e-3, 0.01, 40.0) == 'cubic'
    assert phase_regime(10.0, 0.01, 40.0) == 'saturated'
    assert phase_regime(3e-4, 0.01, 40.0) == 'transition'
    assert asymptotics(5e-3, 0.01, 40.0, phase_unknown=True).phase_regime == 'cubic'


def test_cubic_and_linear_slopes():
    def slope(lo, hi):
        taus = np.geomspace(lo, hi, 5)
        c = [crlb_phase_cpl_closed(40.0, 40 * math.sqrt(t), 0.01).c_z for t in taus]
        return np.polyfit(np.log(taus), np.log(c), 1)[0]

    assert slope(4e-3, 8e-3) == pytest.approx(-3, abs=0.1)
    assert slope(1e-6, 1e-5) == pytest.approx(-1, abs=0.1)


def test_phase_to_z_ratio_small_tau():
    target = 4 * math.pi ** 2 / LAM ** 2
    for tau in np.geomspace(1e-4, 2e-3, 5):
        report = crlb_phase_cpl_closed(4.0, 4 * math.sqrt(tau), LAM)
        assert report.c_phase / report.c_z == pytest.approx(target, rel=0.05)
