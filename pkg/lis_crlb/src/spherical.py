import math
import logging
from dataclasses import dataclass, field

import numpy as np

from lis_crlb.src.geometry import LisError, Terminal

logger = logging.getLogger(__name__)


class SingularGeometry(LisError):
    pass


@dataclass(frozen=True)
class SphericalCoords:
    """Range z1, elevation phi from the z-axis and azimuth psi in (-pi, pi]."""
    z1: float
    phi: float
    psi: float
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class SphericalCrlb:
    c_z1: float
    c_phi: float
    c_psi: float
    matrix: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def sph_from_cart(terminal):
    r = math.hypot(terminal.x0, terminal.y0)
    z1 = math.sqrt(r * r + terminal.z0 ** 2)
    phi = math.atan2(r, terminal.z0)
    if r == 0:
        return SphericalCoords(z1=z1, phi=phi, psi=0.0, degenerate=True)
    return SphericalCoords(z1=z1, phi=phi, psi=math.atan2(terminal.y0, terminal.x0))


def cart_from_sph(coords):
    s = math.sin(coords.phi)
    return Terminal(coords.z1 * s * math.cos(coords.psi),
                    coords.z1 * s * math.sin(coords.psi),
                    coords.z1 * math.cos(coords.phi))


def jacobian(terminal):
    """Rows d(z1, phi, psi)/d(x0, y0, z0).

    The elevation row is the total derivative of phi = arccos(z0/z1); it is
    undefined together with the azimuth row on the CPL.
    """
    x0, y0, z0 = terminal.x0, terminal.y0, terminal.z0
    r2 = x0 * x0 + y0 * y0
    if r2 == 0:
        raise SingularGeometry("Azimuth and elevation gradients are undefined on the CPL (x0=y0=0)")
    r = math.sqrt(r2)
    z1sq = r2 + z0 * z0
    z1 = math.sqrt(z1sq)
    return np.array([[x0 / z1, y0 / z1, z0 / z1],
                     [x0 * z0 / (z1sq * r), y0 * z0 / (z1sq * r), -r / z1sq],
                     [-y0 / r2, x0 / r2, 0.0]])


def jacobian_printed(terminal):
    """Jacobian with the elevation row written as the partial of arcsin(x0/(z1 cos psi)) at fixed psi.

    It matches jacobian() only for y0 = 0 and is kept to quantify the difference.
    """
    x0, y0, z0 = terminal.x0, terminal.y0, terminal.z0
    r2 = x0 * x0 + y0 * y0
    if r2 == 0:
        raise SingularGeometry("Azimuth and elevation gradients are undefined on the CPL (x0=y0=0)")
    z1sq = r2 + z0 * z0
    z1 = math.sqrt(z1sq)
    cos_psi = math.cos(math.atan2(y0, x0))
    radicand = z1sq * cos_psi ** 2 - x0 * x0
    if cos_psi == 0 or radicand <= 0:
        row2 = [math.nan] * 3
    else:
        k = abs(cos_psi) / (z1sq * math.sqrt(radicand) * cos_psi)
        row2 = [k * (z1sq - x0 * x0), -k * x0 * y0, -k * x0 * z0]
    return np.array([[x0 / z1, y0 / z1, z0 / z1],
                     row2,
                     [-y0 / r2, x0 / r2, 0.0]])


def _rel(a, b):
    return abs(a - b) / abs(b) if b != 0 else math.inf


def crlb_spherical(report, terminal):
    """Range/elevation/azimuth CRLBs from J C J^T with the full Cartesian CRLB matrix.

    Diagnostics hold the compact per-component expressions in C_x and C_z
    and the sandwich with the fixed-psi Jacobian, each with its relative
    deviation from the sandwich result.
    """
    J = jacobian(terminal)
    C = np.asarray(report.matrix)[:3, :3]
    S = J @ C @ J.T
    S = 0.5 * (S + S.T)

    x0, y0, z0 = terminal.x0, terminal.y0, terminal.z0
    r2 = x0 * x0 + y0 * y0
    z1sq = r2 + z0 * z0
    c_x, c_z = report.c_x, report.c_z
    cos_psi = math.cos(math.atan2(y0, x0))
    denom = z1sq ** 2 * (z1sq * cos_psi ** 2 - x0 * x0)
    printed = {
        'c_z1': (y0 * y0 - x0 * x0) / z1sq * c_x + z0 * z0 / z1sq * c_z,
        'c_phi': ((z1sq ** 2 - x0 ** 4 + x0 * x0 * y0 * y0) * c_x + x0 * x0 * z0 * z0 * c_z) / denom
        if denom > 0 else math.nan,
        'c_psi': c_x / r2,
    }
    Sp = jacobian_printed(terminal) @ C @ jacobian_printed(terminal).T

    diagnostics = {}
    for i, name in enumerate(('c_z1', 'c_phi', 'c_psi')):
        diagnostics['printed_' + name] = printed[name]
        diagnostics['printed_%s_rel_diff' % name] = _rel(printed[name], S[i, i])
    diagnostics['fixed_psi_c_phi'] = float(Sp[1, 1])
    diagnostics['fixed_psi_c_phi_rel_diff'] = _rel(float(Sp[1, 1]), S[1, 1])
    if diagnostics['printed_c_z1_rel_diff'] > 1e-6:
        logger.debug("compact range CRLB off by %.3g from the sandwich value",
                     diagnostics['printed_c_z1_rel_diff'])
    return SphericalCrlb(c_z1=float(S[0, 0]), c_phi=float(S[1, 1]), c_psi=float(S[2, 2]),
                         matrix=S, diagnostics=diagnostics)
