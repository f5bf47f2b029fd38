import math

import numpy as np
import pytest

from lis_crlb.src.closed_form import crlb_approx_noncpl, crlb_cpl_closed
from lis_crlb.src.fisher import crlb_from_fisher, fisher_numeric
from lis_crlb.src.geometry import Panel, Scenario, Terminal
from lis_crlb.src.spherical import (SingularGeometry, SphericalCoords, cart_from_sph,
                                    crlb_spherical, jacobian, jacobian_printed, sph_from_cart)

LAM = 0.1


def test_sph_from_cart():
    s = sph_from_cart(Terminal(3.0, 4.0, 12.0))
    assert s.z1 == pytest.approx(13.0, rel=1e-15)
    assert s.phi == pytest.approx(math.atan2(5.0, 12.0), rel=1e-15)
    assert s.psi == pytest.approx(math.atan2(4.0, 3.0), rel=1e-15)
    assert not s.degenerate


def test_cpl_is_degenerate():
    s = sph_from_cart(Terminal(0.0, 0.0, 4.0))
    assert s.degenerate
    assert s.phi == 0.0 and s.psi == 0.0 and s.z1 == 4.0


def test_cart_from_sph():
    t = cart_from_sph(SphericalCoords(z1=13.0, phi=math.atan2(5.0, 12.0),
                                      psi=math.atan2(4.0, 3.0)))
    assert (t.x0, t.y0, t.z0) == pytest.approx((3.0, 4.0, 12.0), abs=1e-12)


def test_azimuth_wraps():
    base = SphericalCoords(z1=6.0, phi=0.4, psi=-2.5)
    a = cart_from_sph(base)
    for shift in (2 * math.pi, -2 * math.pi):
        b = cart_from_sph(SphericalCoords(z1=6.0, phi=0.4, psi=-2.5 + shift))
        assert (b.x0, b.y0, b.z0) == pytest.approx((a.x0, a.y0, a.z0), abs=1e-12)
    assert sph_from_cart(a).psi == pytest.approx(-2.5, abs=1e-12)


@pytest.mark.parametrize("terminal", [Terminal(1.0, 0.5, 4.0), Terminal(-2.0, 3.0, 1.5)])
def test_jacobian_matches_finite_difference(terminal):
    h = 1e-6
    J = jacobian(terminal)
    for col, delta in enumerate(np.eye(3)):
        plus = sph_from_cart(Terminal(*(np.array([terminal.x0, terminal.y0, terminal.z0])
                                        + h * delta)))
        minus = sph_from_cart(Terminal(*(np.array([terminal.x0, terminal.y0, terminal.z0])
                                         - h * delta)))
        fd = [(plus.z1 - minus.z1) / (2 * h), (plus.phi - minus.phi) / (2 * h),
              (plus.psi - minus.psi) / (2 * h)]
        np.testing.assert_allclose(J[:, col], fd, atol=1e-8)


def test_jacobian_undefined_on_cpl():
    for fn in (jacobian, jacobian_printed):
        with pytest.raises(SingularGeometry):
            fn(Terminal(0.0, 0.0, 4.0))
    report = crlb_cpl_closed(4.0, 1.0, LAM)
    with pytest.raises(SingularGeometry):
        crlb_spherical(report, Terminal(0.0, 0.0, 4.0))


def test_fixed_azimuth_jacobian_agrees_in_xz_plane():
    t = Terminal(2.0, 0.0, 4.0)
    np.testing.assert_allclose(jacobian_printed(t), jacobian(t), rtol=1e-14, atol=1e-16)
    skew = Terminal(2.0, 1.0, 4.0)
    assert not np.allclose(jacobian_printed(skew)[1], jacobian(skew)[1])


def test_azimuth_bound_is_cx_over_r2():
    t = Terminal(2.0, 1.0, 8.0)
    report = crlb_approx_noncpl(t, 0.5, LAM)
    sph = crlb_spherical(report, t)
    assert sph.c_psi == pytest.approx(report.c_x / 5.0, rel=1e-9)
    assert sph.diagnostics['printed_c_psi_rel_diff'] < 1e-9


def test_limits_near_cpl():
    near = Terminal(1e-3, 0.0, 4.0)
    cpl = crlb_cpl_closed(4.0, 1.0, LAM)
    sph = crlb_spherical(crlb_from_fisher(fisher_numeric(Scenario(near, (Panel(1.0),), LAM))),
                         near)
    z1 = sph_from_cart(near).z1
    assert sph.c_z1 == pytest.approx(cpl.c_z, rel=0.01)
    assert sph.c_phi == pytest.approx(cpl.c_x / z1 ** 2, rel=0.01)


def test_far_field_slopes():
    t = Terminal(2.0, 1.0, 8.0)
    taus = np.geomspace(1e-4, 1e-3, 5)
    sph = [crlb_spherical(crlb_approx_noncpl(t, 8.0 * math.sqrt(tau), LAM), t) for tau in taus]

    def slope(values):
        return np.polyfit(np.log(taus), np.log(values), 1)[0]

    assert slope([s.c_phi for s in sph]) == pytest.approx(-2, abs=0.1)
    assert slope([s.c_psi for s in sph]) == pytest.approx(-2, abs=0.1)
    assert slope([s.c_z1 for s in sph]) == pytest.approx(-1, abs=0.1)


def test_noise_scales_spherical_bounds():
    t = Terminal(2.0, 1.0, 8.0)
    base = crlb_spherical(crlb_approx_noncpl(t, 0.5, LAM), t)
    for k in (0.5, 3.0):
        scaled = crlb_spherical(crlb_approx_noncpl(t, 0.5, LAM, n0=2.0 * k), t)
        np.testing.assert_allclose(scaled.matrix, k * base.matrix, rtol=1e-12)


def test_sandwich_is_symmetric_psd():
    t = Terminal(-1.5, 2.0, 5.0)
    sph = crlb_spherical(crlb_from_fisher(fisher_numeric(Scenario(t, (Panel(1.0),), LAM))), t)
    np.testing.assert_array_equal(sph.matrix, sph.matrix.T)
    assert np.all(np.linalg.eigvalsh(sph.matrix) > 0)
    assert 'fixed_psi_c_phi' in sph.diagnostics
