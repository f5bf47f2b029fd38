import math
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from lis_crlb.src.geometry import LisError
from lis_crlb.src.signal import SurfacePoint, eta, fisher_integrand

logger = logging.getLogger(__name__)

SUPPORTED_EXPONENTS = (3, 4, 5, 7)


class NonConvergence(LisError):
    def __init__(self, message, estimate=None, error_estimate=None, evaluations=0):
        super().__init__(message)
        self.estimate = estimate
        self.error_estimate = error_estimate
        self.evaluations = evaluations


class TooFewElements(LisError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and refinement limits for integrate_disk.

    Level L uses base_radial_nodes * 2**L Gauss-Legendre nodes per radial
    segment and base_angular_nodes * 2**L trapezoid nodes in angle.
    max_points caps one level's evaluation count so a stubborn integrand
    fails with NonConvergence instead of exhausting memory.
    """
    rel_tol: float = 1e-9
    abs_tol: float = 1e-14
    max_refinement_levels: int = 20
    base_radial_nodes: int = 8
    base_angular_nodes: int = 32
    max_points: int = 2 ** 23

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("Quadrature tolerances must be positive")
        if self.max_refinement_levels < 1:
            raise ValueError("max_refinement_levels must be at least 1")


@dataclass(frozen=True)
class IntegralResult:
    value: object
    error_estimate: float
    evaluations: int


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    return leggauss(n)


def radial_breakpoints(R, focus=None):
    """Radial segment edges for the polar rule.

    `focus` is (r_perp, width): the lateral distance of the integrand's
    peak from the disk center and its width (the terminal height). Edges are
    graded geometrically around r_perp so every segment sees a smooth,
    at most factor-two change of scale.
    """
    edges = {0.0, float(R)}
    if focus is not None:
        r_perp, width = focus
        if 0 < r_perp < R:
            edges.add(float(r_perp))
        d = width / 4.0
        while d < R + r_perp:
            for p in (r_perp - d, r_perp + d):
                if 0 < p < R:
                    edges.add(float(p))
            d *= 2.0
    return sorted(edges)


def _level_sum(f, edges, n_r, n_th):
    theta = 2 * np.pi * (np.arange(n_th) + 0.5) / n_th
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    t, w = _gauss_legendre(n_r)
    grid_shape = (n_r, n_th)
    total, total_abs = None, None
    for r_a, r_b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (r_b - r_a)
        r = r_a + half * (t + 1.0)
        w_r = half * w * r * (2 * np.pi / n_th)
        vals = np.asarray(f(r[:, None] * cos_t[None, :], r[:, None] * sin_t[None, :]), dtype=float)
        if vals.ndim < 2:
            vals = np.broadcast_to(vals, grid_shape)
        part = np.tensordot(vals, w_r, axes=([-2], [0])).sum(axis=-1)
        part_abs = np.tensordot(np.abs(vals), w_r, axes=([-2], [0])).sum(axis=-1)
        total = part if total is None else total + part
        total_abs = part_abs if total_abs is None else total_abs + part_abs
    return total, total_abs


def integrate_disk(f, R, spec=None, focus=None):
    """Integrates f(x, y) over the disk x**2 + y**2 <= R**2.

    f is evaluated on 2-D arrays and may return either an array of the same
    shape or a stack of shape (m, ...) for m integrands sharing one grid.
    Successive levels double the nodes in both directions; a component is
    converged when its change is below max(rel_tol*|value|, abs_tol), or
    below the rounding floor of its absolute integral.
    """
    spec = QuadratureSpec() if spec is None else spec
    edges = radial_breakpoints(R, focus)
    n_seg = len(edges) - 1
    eps = np.finfo(float).eps

    previous = None
    last_diff = None
    evaluations = 0
    for level in range(spec.max_refinement_levels + 1):
        n_r = spec.base_radial_nodes * 2 ** level
        n_th = spec.base_angular_nodes * 2 ** level
        if n_r * n_th * n_seg > spec.max_points:
            break
        value, value_abs = _level_sum(f, edges, n_r, n_th)
        evaluations += n_r * n_th * n_seg
        if previous is not None:
            diff = np.abs(value - previous)
            last_diff = float(np.max(diff))
            tol = np.maximum(np.maximum(spec.rel_tol * np.abs(value), spec.abs_tol),
                             1e3 * eps * value_abs)
            if np.all(diff <= tol):
                return IntegralResult(value=value if np.ndim(value) else float(value),
                                      error_estimate=last_diff,
                                      evaluations=evaluations)
        previous = value

    raise NonConvergence(
        "Disk quadrature did not converge after %d evaluations (R=%g)" % (evaluations, R),
        estimate=previous, error_estimate=last_diff, evaluations=evaluations)


def _check_g_args(k, n):
    if k not in (1, 2, 3):
        raise ValueError("g index k must be 1, 2 or 3, got %r" % (k,))
    if n not in SUPPORTED_EXPONENTS:
        raise ValueError("g exponent n must be one of %s, got %r" % (SUPPORTED_EXPONENTS, n))


def g_kernel(k, n, terminal):
    """Integrand of g_k(n) for a terminal given in panel-local coordinates."""
    def f(x, y):
        p = eta(terminal, SurfacePoint(x, y)) ** (-n / 2)
        if k == 1:
            return x ** 2 * p
        if k == 2:
            return y ** 2 * p
        return p
    return f


def g_numeric(k, n, terminal, R, spec=None):
    """g1 = int x^2 eta^(-n/2), g2 = int y^2 eta^(-n/2), g3 = int eta^(-n/2) over the disk."""
    _check_g_args(k, n)
    focus = (terminal.r_perp, terminal.z0)
    return integrate_disk(g_kernel(k, n, terminal), R, spec, focus).value


def g_moment_numeric(k, n, terminal, R, spec=None):
    """First moments int x eta^(-n/2) (k=1) and int y eta^(-n/2) (k=2)."""
    if k not in (1, 2):
        raise ValueError("moment index k must be 1 or 2, got %r" % (k,))
    if n not in SUPPORTED_EXPONENTS:
        raise ValueError("g exponent n must be one of %s, got %r" % (SUPPORTED_EXPONENTS, n))

    def f(x, y):
        return (x if k == 1 else y) * eta(terminal, SurfacePoint(x, y)) ** (-n / 2)
    return integrate_disk(f, R, spec, (terminal.r_perp, terminal.z0)).value


def g_closed_cpl(k, n, z0, R):
    """Closed-form g_k(n) for a terminal on the axis of the disk.

    g1 = g2 = pi/((n-2)(n-4)) * (2 z0^(4-n) - (R^2+z0^2)^(1-n/2) ((n-2) R^2 + 2 z0^2))
    g3 = 2 pi (z0^(2-n) - (R^2+z0^2)^(1-n/2)) / (n-2)

    Both are evaluated through log1p/expm1 so small disks keep full precision.
    """
    if k not in (1, 2, 3):
        raise ValueError("g index k must be 1, 2 or 3, got %r" % (k,))
    if n == 2:
        raise ValueError("g_closed_cpl is singular at n=2")
    if k in (1, 2) and n == 4:
        raise ValueError("g1/g2 closed form is singular at n=4")
    tau = (R / z0) ** 2
    lt = math.log1p(tau)
    if k == 3:
        return 2 * math.pi * z0 ** (2 - n) * -math.expm1((1 - n / 2) * lt) / (n - 2)
    if n > 2:
        bracket = -2 * math.expm1(math.log1p((n - 2) * tau / 2) + (1 - n / 2) * lt)
    else:
        bracket = 2 - (1 + tau) ** (1 - n / 2) * ((n - 2) * tau + 2)
    return math.pi * z0 ** (4 - n) * bracket / ((n - 2) * (n - 4))


def g3_printed_cpl(n, z0, R):
    """g3 values as printed for the phase proof; kept only to report how far off they are."""
    a = R ** 2 + z0 ** 2
    if n == 3:
        return 1 / z0 - 1 / a
    if n == 4:
        return 0.5 * (1 / z0 ** 2 - 1 / math.sqrt(a))
    if n == 5:
        return (1 / z0 ** 3 - a ** -1.5) / 3
    if n == 7:
        return (1 / z0 ** 5 - a ** -2.5) / 5
    raise ValueError("no printed g3 form for n=%r" % (n,))


@dataclass(frozen=True)
class DiscreteSum:
    value: float
    n_elements: int
    pitch: float
    expected_elements: float


def lattice_points(R, pitch):
    """Element centers i*pitch, j*pitch (origin included) inside the disk."""
    m = int(math.floor(R / pitch))
    idx = np.arange(-m, m + 1) * pitch
    X, Y = np.meshgrid(idx, idx, indexing='ij')
    inside = X ** 2 + Y ** 2 <= R ** 2 * (1 + 1e-12)
    return X[inside], Y[inside]


def discrete_element_sum(i, j, scenario, panel=None, pitch=None):
    """Brute-force Riemann sum of one Fisher integrand over a square element lattice.

    The default pitch is half a wavelength; the element count is returned
    together with the continuous-aperture estimate 4 pi R^2 / lambda^2.
    """
    panel = scenario.panel if panel is None else panel
    pitch = scenario.lam / 2 if pitch is None else pitch
    x, y = lattice_points(panel.radius, pitch)
    if x.size < 4:
        raise TooFewElements("Only %d element(s) fit in a disk of radius %g at pitch %g"
                             % (x.size, panel.radius, pitch))
    terminal = scenario.terminal.relative_to(panel)
    values = fisher_integrand(i, j, terminal, SurfacePoint(x, y), scenario.lam)
    expected = math.pi * panel.radius ** 2 / pitch ** 2
    n = int(x.size)
    if abs(n - expected) > 0.02 * expected:
        logger.warning("element count %d deviates from the aperture estimate %.1f by more than 2%%",
                       n, expected)
    return DiscreteSum(value=float(np.sum(values) * pitch ** 2), n_elements=n,
                       pitch=pitch, expected_elements=expected)
