"""Closed forms for a terminal on the central perpendicular line (CPL) and their approximations.

All f-functions are written in u = sqrt(1 + tau). Each one has a factor
f7 = (u - 1)/u = tau/(u (u + 1)), which carries the whole small-tau behaviour,
so the factored forms below lose no digits to cancellation. Below
TAYLOR_SWITCH the three-term series are used instead.
"""
import math
import logging
from dataclasses import dataclass

import numpy as np

from lis_crlb.src.fisher import FisherMatrix, CrlbReport, crlb_from_fisher
from lis_crlb.src.geometry import Scenario, Panel, mild_conditions_hold
from lis_crlb.src.quadrature import g_closed_cpl

logger = logging.getLogger(__name__)

TAYLOR_SWITCH = 1e-4

# three leading series coefficients, lowest power first
_TAYLOR = {
    'f1': (2, (15 / 8, -35 / 8, 945 / 128)),
    'f2': (2, (3 / 8, -5 / 8, 105 / 128)),
    'f3': (1, (10.0, -45 / 2, 155 / 4)),
    'f3_printed': (1, (65 / 2, -495 / 8, 1565 / 16)),
    'f4': (1, (3 / 2, -15 / 8, 35 / 16)),
    'f5': (1, (5 / 2, -45 / 8, 155 / 16)),
    'f6': (3, (1 / 8, -9 / 32, 57 / 128)),
    'f7': (1, (1 / 2, -3 / 8, 5 / 16)),
    'f8': (1, (-1 / 10, -1 / 40, 1 / 32)),
    'f9': (1, (-2 / 3, 1 / 2, -29 / 72)),
}


@dataclass(frozen=True)
class FFunctions:
    """f1..f9 at one tau.

    f3 is the z-information correction term 4 - (4 + 5 tau^2)/(1+tau)^(5/2)
    (equal to 4 f5); f3_printed keeps the 13 - (13 + 5 tau^2)/(1+tau)^(5/2)
    variant for comparison only.
    """
    tau: float
    f1: float
    f2: float
    f3: float
    f4: float
    f5: float
    f6: float
    f7: float
    f8: float
    f9: float
    f3_printed: float


def _series(name, tau):
    power, coeffs = _TAYLOR[name]
    return tau ** power * (coeffs[0] + tau * (coeffs[1] + tau * coeffs[2]))


def f_functions(tau):
    if not tau > 0:
        raise ValueError("tau must be positive, got %r" % (tau,))
    if tau < TAYLOR_SWITCH:
        values = {name: _series(name, tau) for name in _TAYLOR}
        return FFunctions(tau=tau, **values)

    u = math.sqrt(1 + tau)
    f7 = tau / (u * (u + 1))
    u2, u3, u4 = u * u, u ** 3, u ** 4
    f1 = f7 ** 2 * (u3 + 2 * u2 + 3 * u + 1.5) / u3
    f2 = f7 ** 2 * (1 + 0.5 / u)
    f4 = f7 * (u2 + u + 1) / u2
    sum4 = u4 + u3 + u2 + u + 1
    f5 = f7 * (sum4 - 1.25 * (u - 1) * (u + 1) ** 2) / u4
    f6 = f7 ** 3
    f8 = -tau ** 2 / (4 * u4 * f5)
    f9 = -tau * (u + 1) / (u * (u2 + u + 1))
    f3_printed = f7 * (13 * sum4 - 5 * (u - 1) * (u + 1) ** 2) / u4
    return FFunctions(tau=tau, f1=f1, f2=f2, f3=4 * f5, f4=f4, f5=f5, f6=f6, f7=f7,
                      f8=f8, f9=f9, f3_printed=f3_printed)


def cpl_information(z0, R, lam, n0=2.0):
    """(I_xy, I_z) for a terminal at (0, 0, z0) in front of a disk of radius R."""
    f = f_functions((R / z0) ** 2)
    c = 2.0 / n0
    k2 = 2 * math.pi ** 2 / (3 * lam ** 2)
    i_xy = c * (3 / (40 * z0 ** 2) * f.f1 + k2 * f.f2)
    i_z = c * (1 / (40 * z0 ** 2) * f.f3 + k2 * f.f4)
    return i_xy, i_z


def cpl_i33_g_route(z0, R, lam, n0=2.0):
    g3 = {n: g_closed_cpl(3, n, z0, R) for n in (3, 5, 7)}
    k2 = (2 * math.pi / lam) ** 2
    return (2.0 / n0) * z0 ** 3 / (4 * math.pi) * (
        g3[3] / (4 * z0 ** 4) + (k2 - 1.5 / z0 ** 2) * g3[5] + 2.25 * g3[7])


def fisher_cpl_g_route(z0, R, lam, n0=2.0):
    """Same diagonal assembled from the closed-form g1(5), g1(7), g3(3), g3(5), g3(7)."""
    k2 = (2 * math.pi / lam) ** 2
    i_xy = (2.0 / n0) * z0 / (4 * math.pi) * (
        2.25 * g_closed_cpl(1, 7, z0, R) + k2 * g_closed_cpl(1, 5, z0, R))
    return i_xy, cpl_i33_g_route(z0, R, lam, n0)


def fisher_cpl_closed(z0, R, lam, n0=2.0):
    """Diagonal 3x3 Fisher matrix on the CPL, cross-checked against the g-route."""
    i_xy, i_z = cpl_information(z0, R, lam, n0)
    g_xy, g_z = fisher_cpl_g_route(z0, R, lam, n0)
    g_route_diff = max(abs(g_xy - i_xy) / i_xy, abs(g_z - i_z) / i_z)
    if g_route_diff > 1e-10:
        logger.warning("CPL closed form and g-route disagree by %.3g at z0=%g R=%g",
                       g_route_diff, z0, R)

    f = f_functions((R / z0) ** 2)
    c = 2.0 / n0
    k2 = 2 * math.pi ** 2 / (3 * lam ** 2)
    diagnostics = {
        'g_route_rel_diff': g_route_diff,
        'i_xy_printed_coefficient': c * (f.f1 / (30 * z0 ** 2) + k2 * f.f2),
        'i_z_printed_f3': c * (f.f3_printed / (40 * z0 ** 2) + k2 * f.f4),
    }
    return FisherMatrix(np.diag([i_xy, i_xy, i_z]), 'closed', diagnostics=diagnostics)


def crlb_cpl_closed(z0, R, lam, n0=2.0):
    return crlb_from_fisher(fisher_cpl_closed(z0, R, lam, n0))


def property2_parameters(terminal, R, lam, n0=2.0):
    """alpha and beta: CPL information at distance z1, scaled by (z0/z1) and (z0/z1)^3."""
    z1 = math.sqrt(terminal.x0 ** 2 + terminal.y0 ** 2 + terminal.z0 ** 2)
    i_xy, i_z = cpl_information(z1, R, lam, n0)
    ratio = terminal.z0 / z1
    return ratio * i_xy, ratio ** 3 * i_z


def _approx_crlb_matrix(terminal, inv_alpha, inv_beta):
    a = terminal.x0 / terminal.z0
    b = terminal.y0 / terminal.z0
    return np.array([[inv_alpha, 0.0, -a * inv_alpha],
                     [0.0, inv_alpha, -b * inv_alpha],
                     [-a * inv_alpha, -b * inv_alpha, inv_beta + (a * a + b * b) * inv_alpha]])


def _warn_mild(terminal, R, lam, eps):
    mild = mild_conditions_hold(Scenario(terminal, (Panel(R),), lam), eps=eps)
    if not mild.holds:
        logger.warning("mild conditions violated at (%g, %g, %g), R=%g: ratios %.3g, %.3g",
                       terminal.x0, terminal.y0, terminal.z0, R,
                       mild.wavelength_ratio, mild.aperture_ratio)
    return mild


def crlb_approx_noncpl(terminal, R, lam, n0=2.0, eps=0.1):
    """CRLB off the CPL from the rank-one-plus-diagonal Fisher approximation.

    The Fisher matrix alpha*diag(1,1,0) + beta*v v^T, v = (x0/z0, y0/z0, 1),
    is inverted numerically and compared with its explicit inverse.
    """
    mild = _warn_mild(terminal, R, lam, eps)
    alpha, beta = property2_parameters(terminal, R, lam, n0)
    v = np.array([terminal.x0 / terminal.z0, terminal.y0 / terminal.z0, 1.0])
    F = alpha * np.diag([1.0, 1.0, 0.0]) + beta * np.outer(v, v)
    report = crlb_from_fisher(FisherMatrix(F, 'approx'))

    direct = _approx_crlb_matrix(terminal, 1 / alpha, 1 / beta)
    direct_diff = float(np.max(np.abs(direct - report.matrix)) / np.max(np.abs(direct)))
    if direct_diff > 1e-10:
        logger.warning("explicit approximate CRLB differs from the inverted matrix by %.3g",
                       direct_diff)
    report.diagnostics.update({'alpha': alpha, 'beta': beta,
                               'direct_form_rel_diff': direct_diff,
                               'mild_conditions': mild.holds,
                               'wavelength_ratio': mild.wavelength_ratio,
                               'aperture_ratio': mild.aperture_ratio})
    return report


def crlb_farfield_approx(terminal, R, lam, n0=2.0, tau_max=0.05, eps=0.1):
    """Small-aperture CRLB off the CPL.

    C_xy = 4 lam^2 z1^5 / (pi^2 z0 R^4)
    C_z  = lam^2 z0^2 / (pi^2 R^2) + 4 lam^2 r^2 z1^5 / (pi^2 z0^3 R^4)
    """
    tau = (R / terminal.z0) ** 2
    if tau > tau_max:
        logger.warning("far-field CRLB used at tau=%.3g above %.3g", tau, tau_max)
    mild = _warn_mild(terminal, R, lam, eps)
    z0 = terminal.z0
    r2 = terminal.x0 ** 2 + terminal.y0 ** 2
    z1 = math.sqrt(r2 + z0 ** 2)
    scale = n0 / 2.0
    inv_alpha = scale * 4 * lam ** 2 * z1 ** 5 / (math.pi ** 2 * z0 * R ** 4)
    inv_beta = scale * lam ** 2 * z0 ** 2 / (math.pi ** 2 * R ** 2)
    C = _approx_crlb_matrix(terminal, inv_alpha, inv_beta)
    return CrlbReport(c_x=float(C[0, 0]), c_y=float(C[1, 1]), c_z=float(C[2, 2]),
                      matrix=C, condition_number=float(np.linalg.cond(C)), method='approx',
                      diagnostics={'tau': tau, 'mild_conditions': mild.holds})


def phase_cpl_information(z0, R, lam, n0=2.0):
    """(I34, I44) on the CPL: pi tau / (2 lam (1+tau)) and f7/2, times 2/N0."""
    tau = (R / z0) ** 2
    c = 2.0 / n0
    return c * math.pi * tau / (2 * lam * (1 + tau)), c * f_functions(tau).f7 / 2


def crlb_phase_cpl_closed(z0, R, lam, n0=2.0):
    """CRLBs on the CPL with an unknown common phase.

    C_x, C_y keep their known-phase values. C_z and C_phase come from f5..f9;
    the Schur complement of the g-route Fisher blocks is kept as a second
    route in diagnostics and a warning is logged when the two differ by more
    than 1e-9.
    """
    tau = (R / z0) ** 2
    f = f_functions(tau)
    scale = n0 / 2.0
    i_xy, _ = cpl_information(z0, R, lam, n0)
    c_z = scale / (f.f5 / (10 * z0 ** 2) + math.pi ** 2 / (6 * lam ** 2) * f.f6)
    c_phase = scale / (0.5 * f.f7
                       + 1 / (lam ** 2 / (10 * math.pi ** 2 * z0 ** 2 * f.f8) + 8 / (3 * f.f9)))

    i34, i44 = phase_cpl_information(z0, R, lam, n0)
    c_zphase = -i34 * c_z / i44

    g34 = g_closed_cpl(3, 4, z0, R)
    g33 = g_closed_cpl(3, 3, z0, R)
    c = 2.0 / n0
    i33_g = cpl_i33_g_route(z0, R, lam, n0)
    i34_g = c * z0 ** 2 / (2 * lam) * g34
    i44_g = c * z0 / (4 * math.pi) * g33
    det = i33_g * i44_g - i34_g ** 2
    if det > 0:
        schur_z, schur_phase = i44_g / det, i33_g / det
    else:
        schur_z = schur_phase = math.inf
    schur_diff = max(abs(schur_z - c_z) / c_z, abs(schur_phase - c_phase) / c_phase)
    if schur_diff > 1e-9:
        logger.warning("phase CRLB closed form and Schur route disagree by %.3g at tau=%g",
                       schur_diff, tau)

    C = np.diag([1 / i_xy, 1 / i_xy, c_z, c_phase])
    C[2, 3] = C[3, 2] = c_zphase
    return CrlbReport(c_x=1 / i_xy, c_y=1 / i_xy, c_z=c_z, c_phase=c_phase, matrix=C,
                      condition_number=float(np.linalg.cond(C)), method='closed',
                      diagnostics={'schur_c_z': schur_z, 'schur_c_phase': schur_phase,
                                   'schur_route_rel_diff': schur_diff})


def crlb_phase_schur(fisher):
    """Nuisance-phase elimination on a 4x4 Fisher matrix.

    C_phase = 1/(I44 - i C0 i^T) and C0~ = C0 + C0 i^T i C0 C_phase, where C0
    is the inverse of the 3x3 position block and i the cross-information row.
    """
    F = np.asarray(fisher.entries)
    if F.shape != (4, 4):
        raise ValueError("Schur elimination needs a 4x4 Fisher matrix")
    position = crlb_from_fisher(FisherMatrix(F[:3, :3], fisher.method))
    C0 = position.matrix
    i = F[3, :3]
    c_phase = 1 / (F[3, 3] - i @ C0 @ i)
    C0i = C0 @ i
    C_tilde = C0 + np.outer(C0i, C0i) * c_phase
    C = np.empty((4, 4))
    C[:3, :3] = C_tilde
    C[:3, 3] = C[3, :3] = -C0i * c_phase
    C[3, 3] = c_phase
    return CrlbReport(c_x=float(C[0, 0]), c_y=float(C[1, 1]), c_z=float(C[2, 2]),
                      c_phase=float(c_phase), matrix=C,
                      condition_number=float(np.linalg.cond(F)), method=fisher.method,
                      quad_err=fisher.quad_err)


def phase_smalltau_approx(tau, lam, z0):
    """Small-tau forms with an unknown phase, for N0 = 2.

    C_z   ~ 48 lam^2 / (pi^2 tau^3) / (1 + 12 lam^2 / (pi^2 z0^2 tau^2))
    C_phi ~ 4 (lam^2 + 4 pi^2 z0^2) / (tau lam^2)
    """
    c_z = 48 * lam ** 2 / (math.pi ** 2 * tau ** 3) / (
        1 + 12 * lam ** 2 / (math.pi ** 2 * z0 ** 2 * tau ** 2))
    c_phase = 4 * (lam ** 2 + 4 * math.pi ** 2 * z0 ** 2) / (tau * lam ** 2)
    return c_z, c_phase


@dataclass(frozen=True)
class Asymptotics:
    tau: float
    limit: float
    limit_z_phase_unknown: float
    limit_phase: float
    regime_threshold: float
    phase_regime: str
    phase_ratio: float
    c_z_linear: float
    c_z_cubic: float
    c_xy_taylor: float
    c_z_taylor: float
    c_xy_farfield: float
    c_z_farfield: float


def phase_regime(tau, lam, z0, margin=10.0):
    """'linear' when tau << 2 sqrt(3) lam/(pi z0), 'cubic' between that and 1."""
    threshold = 2 * math.sqrt(3) * lam / (math.pi * z0)
    if tau * margin <= threshold:
        return 'linear'
    if tau >= margin * threshold and tau * margin <= 1:
        return 'cubic'
    if tau >= 1:
        return 'saturated'
    return 'transition'


def asymptotics(tau, lam, z0, phase_unknown=False):
    """Limits and small-tau laws for N0 = 2.

    limit: 3 lam^2 / (2 pi^2), approached by every CPL CRLB as tau grows
    (6 lam^2 / pi^2 for C_z and the constant limit_phase for C_phi with an
    unknown phase).
    """
    if not tau > 0:
        raise ValueError("tau must be positive, got %r" % (tau,))
    pi2 = math.pi ** 2
    threshold = 2 * math.sqrt(3) * lam / (math.pi * z0)
    return Asymptotics(
        tau=tau,
        limit=3 * lam ** 2 / (2 * pi2),
        limit_z_phase_unknown=6 * lam ** 2 / pi2,
        limit_phase=1 / (0.5 - 1 / (8 / 3 + lam ** 2 / (10 * pi2 * z0 ** 2))),
        regime_threshold=threshold,
        phase_regime=phase_regime(tau, lam, z0) if phase_unknown else 'known',
        phase_ratio=4 * pi2 / lam ** 2,
        c_z_linear=4 * z0 ** 2 / tau,
        c_z_cubic=48 * lam ** 2 / (pi2 * tau ** 3),
        c_xy_taylor=16 / tau ** 2 / (9 / (4 * z0 ** 2) + 4 * pi2 / lam ** 2),
        c_z_taylor=4 / tau / (1 / z0 ** 2 + 4 * pi2 / lam ** 2),
        c_xy_farfield=4 * lam ** 2 / (pi2 * tau ** 2),
        c_z_farfield=lam ** 2 / (pi2 * tau),
    )
