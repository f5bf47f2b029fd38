"""Received signal at the surface and the integrands of the Fisher information.

The signal at surface point (x, y, 0) from a terminal at (x0, y0, z0) is

    s = A * eta**(-3/4) * exp(-j*(k*sqrt(eta) + phi)),   A = sqrt(z0) / (2*sqrt(pi))

with eta the squared distance and k = 2*pi/lambda. Every derivative of s with
respect to (x0, y0, z0, phi) shares the carrier exp(-j*(k*sqrt(eta) + phi)), so
writing ds_i = carrier * (a_i + j*b_i) the Fisher integrand
Re{ds_j * conj(ds_i)} = a_i*a_j + b_i*b_j is real, smooth on the scale of z0
and independent of phi. Quadrature only ever sees the envelope (a, b).
"""
from dataclasses import dataclass

import numpy as np

PARAMETER_NAMES = ('x', 'y', 'z', 'phase')


@dataclass(frozen=True)
class SurfacePoint:
    """Point(s) on the z=0 plane in panel-local coordinates; x, y may be arrays."""
    x: object
    y: object


@dataclass(frozen=True)
class SignalGradient:
    ds1: object
    ds2: object
    ds3: object
    ds4: object = None

    def as_tuple(self):
        if self.ds4 is None:
            return (self.ds1, self.ds2, self.ds3)
        return (self.ds1, self.ds2, self.ds3, self.ds4)


def _amplitude(z0):
    return np.sqrt(z0) / (2 * np.sqrt(np.pi))


def eta(terminal, point):
    return terminal.z0 ** 2 + (point.y - terminal.y0) ** 2 + (point.x - terminal.x0) ** 2


def noiseless_signal(terminal, point, lam, phi=0.0):
    e = eta(terminal, point)
    k = 2 * np.pi / lam
    return _amplitude(terminal.z0) * e ** -0.75 * np.exp(-1j * (k * np.sqrt(e) + phi))


def envelope(terminal, point, lam):
    """Real and imaginary parts (a, b) of every derivative with the carrier removed.

    Returns two arrays of shape (4, *point shape); row 3 is the phase derivative.
    """
    e = np.asarray(eta(terminal, point), dtype=float)
    k = 2 * np.pi / lam
    A = _amplitude(terminal.z0)
    z0 = terminal.z0
    dx = np.asarray(point.x - terminal.x0, dtype=float)
    dy = np.asarray(point.y - terminal.y0, dtype=float)

    e34 = e ** -0.75
    e54 = e ** -1.25
    e74 = e ** -1.75

    a = np.empty((4,) + e.shape)
    b = np.empty((4,) + e.shape)
    a[0] = 1.5 * A * dx * e74
    b[0] = A * k * dx * e54
    a[1] = 1.5 * A * dy * e74
    b[1] = A * k * dy * e54
    a[2] = A * z0 * (e34 / (2 * z0 ** 2) - 1.5 * e74)
    b[2] = -A * z0 * k * e54
    # ds4 = -j * s
    a[3] = 0.0
    b[3] = -A * e34
    return a, b


def spatial_gradient(terminal, point, lam, phi=0.0, phase_unknown=False):
    """Derivatives of the signal with respect to x0, y0, z0 (and phi when unknown)."""
    a, b = envelope(terminal, point, lam)
    e = eta(terminal, point)
    carrier = np.exp(-1j * (2 * np.pi / lam * np.sqrt(e) + phi))
    ds = carrier * (a + 1j * b)
    return SignalGradient(ds[0], ds[1], ds[2], ds[3] if phase_unknown else None)


def _check_index(i):
    if i not in (1, 2, 3, 4):
        raise ValueError("Fisher index must be in 1..4, got %r" % (i,))


def fisher_integrand(i, j, terminal, point, lam):
    """Re{ds_j conj(ds_i)} for 1-based parameter indices (x, y, z, phase)."""
    _check_index(i)
    _check_index(j)
    a, b = envelope(terminal, point, lam)
    return a[i - 1] * a[j - 1] + b[i - 1] * b[j - 1]


def fisher_integrand_naive(i, j, terminal, point, lam, phi=0.0):
    """Same quantity from the complex derivatives, carrier included."""
    _check_index(i)
    _check_index(j)
    ds = spatial_gradient(terminal, point, lam, phi, phase_unknown=True).as_tuple()
    return np.real(ds[j - 1] * np.conj(ds[i - 1]))


def upper_pairs(dim):
    return [(i, j) for i in range(1, dim + 1) for j in range(i, dim + 1)]


def integrand_stack(terminal, point, lam, pairs):
    """Integrands for several (i, j) pairs from one envelope evaluation."""
    a, b = envelope(terminal, point, lam)
    out = np.empty((len(pairs),) + a.shape[1:])
    for n, (i, j) in enumerate(pairs):
        out[n] = a[i - 1] * a[j - 1] + b[i - 1] * b[j - 1]
    return out
