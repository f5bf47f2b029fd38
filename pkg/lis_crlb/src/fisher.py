import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from lis_crlb.src.geometry import LisError
from lis_crlb.src.quadrature import (integrate_disk, g_numeric, g_moment_numeric,
                                     discrete_element_sum, QuadratureSpec)
from lis_crlb.src.signal import SurfacePoint, integrand_stack, upper_pairs

logger = logging.getLogger(__name__)

# smallest/largest eigenvalue of the Jacobi-scaled matrix below which inversion is refused
EIGEN_FLOOR = 1e-13
# negative eigenvalues down to -PSD_TOL * trace are taken as rounding
PSD_TOL = 1e-10


class SingularFisher(LisError):
    def __init__(self, message, eigen_ratio=None):
        super().__init__(message)
        self.eigen_ratio = eigen_ratio


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    """Symmetric Fisher information in (x, y, z) or (x, y, z, phase) order."""
    entries: np.ndarray
    method: str
    quad_err: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        F = np.array(self.entries, dtype=float)
        if F.ndim != 2 or F.shape[0] != F.shape[1] or F.shape[0] not in (3, 4):
            raise ValueError("Fisher matrix must be 3x3 or 4x4, got shape %s" % (F.shape,))
        scale = np.max(np.abs(F)) if F.size else 0.0
        if np.max(np.abs(F - F.T)) > 1e-12 * scale:
            raise ValueError("Fisher matrix is not symmetric")
        F = 0.5 * (F + F.T)
        # non-finite entries are left for crlb_from_fisher to report as singular
        if np.all(np.isfinite(F)):
            smallest = np.linalg.eigvalsh(F)[0]
            if smallest < -PSD_TOL * np.trace(F):
                raise ValueError("Fisher matrix is not positive semidefinite "
                                 "(smallest eigenvalue %.3g)" % smallest)
        F.setflags(write=False)
        object.__setattr__(self, 'entries', F)

    @property
    def dim(self):
        return self.entries.shape[0]

    def is_psd(self):
        ev = np.linalg.eigvalsh(self.entries)
        return bool(ev[0] >= -PSD_TOL * np.trace(self.entries))

    def __add__(self, other):
        if self.dim != other.dim:
            raise ValueError("Cannot add %dx%d and %dx%d Fisher matrices"
                             % (self.dim, self.dim, other.dim, other.dim))
        method = self.method if self.method == other.method else 'mixed'
        return FisherMatrix(self.entries + other.entries, method,
                            self.quad_err + other.quad_err)


@dataclass(frozen=True, eq=False)
class CrlbReport:
    c_x: float
    c_y: float
    c_z: float
    matrix: np.ndarray
    condition_number: float
    method: str
    c_phase: float = None
    quad_err: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def as_array(self):
        return np.diag(self.matrix).copy()


def _invert_spd(S):
    """Inverse of a symmetric positive definite matrix: Cholesky, Bunch-Kaufman LDL^T if that fails."""
    eye = np.eye(S.shape[0])
    try:
        return linalg.cho_solve(linalg.cho_factor(S, lower=True), eye)
    except linalg.LinAlgError:
        logger.debug("Cholesky failed, falling back to symmetric-pivoting solve")
        return linalg.solve(S, eye, assume_a='sym')


def crlb_from_fisher(fisher, method=None):
    """CRLB matrix as the inverse of a Fisher matrix.

    The matrix is first scaled to unit diagonal so the singularity test
    (smallest eigenvalue against EIGEN_FLOOR times the largest) does not
    depend on the mix of units in the parameters.
    """
    F = np.asarray(fisher.entries, dtype=float)
    d = np.diag(F)
    if not np.all(np.isfinite(F)):
        raise SingularFisher("Fisher matrix has non-finite entries")
    if np.any(d <= 0):
        raise SingularFisher("Fisher matrix has a non-positive diagonal entry: %s" % d)

    s = 1 / np.sqrt(d)
    S = F * s[:, None] * s[None, :]
    ev = np.linalg.eigvalsh(S)
    ratio = ev[0] / ev[-1]
    if ratio <= EIGEN_FLOOR:
        raise SingularFisher("Fisher matrix is numerically singular (eigenvalue ratio %.3g)" % ratio,
                             eigen_ratio=ratio)

    C = _invert_spd(S) * s[:, None] * s[None, :]
    C = 0.5 * (C + C.T)
    diagnostics = dict(fisher.diagnostics)
    diagnostics['scaled_condition_number'] = float(1 / ratio)
    return CrlbReport(c_x=float(C[0, 0]), c_y=float(C[1, 1]), c_z=float(C[2, 2]),
                      c_phase=float(C[3, 3]) if F.shape[0] == 4 else None,
                      matrix=C, condition_number=float(np.linalg.cond(F)),
                      method=method or fisher.method, quad_err=fisher.quad_err,
                      diagnostics=diagnostics)


@dataclass(frozen=True, eq=False)
class PhaseColumn:
    """(I14, I24, I34, I44) assembled from g-integrals two ways."""
    exact: np.ndarray
    printed: np.ndarray


def fisher_phase_column(scenario, panel=None, spec=None):
    """Fourth row of the Fisher matrix from g3(3), g3(4) and the first moments of eta^-2.

    exact:   I_i4 = c z0/(2 lam) (x_i g3(4) - m_i(4)), I34 = c z0^2/(2 lam) g3(4)
    printed: I_i4 = c z0 g3(4)/lam * x_i, the compact form that drops the
             moments and doubles the prefactor
    with c = 2/N0 and I44 = c z0/(4 pi) g3(3) in both.
    """
    panel = scenario.panel if panel is None else panel
    t = scenario.terminal.relative_to(panel)
    R, lam, c = panel.radius, scenario.lam, 2.0 / scenario.n0
    g33 = g_numeric(3, 3, t, R, spec)
    g34 = g_numeric(3, 4, t, R, spec)
    m1 = g_moment_numeric(1, 4, t, R, spec)
    m2 = g_moment_numeric(2, 4, t, R, spec)
    z0 = t.z0
    i44 = c * z0 / (4 * np.pi) * g33
    exact = np.array([c * z0 / (2 * lam) * (t.x0 * g34 - m1),
                      c * z0 / (2 * lam) * (t.y0 * g34 - m2),
                      c * z0 ** 2 / (2 * lam) * g34,
                      i44])
    printed = np.array([c * z0 * g34 / lam * t.x0,
                        c * z0 * g34 / lam * t.y0,
                        c * z0 * g34 / lam * z0,
                        i44])
    return PhaseColumn(exact=exact, printed=printed)


def fisher_numeric(scenario, panel=None, spec=None, check_phase_column=True):
    """Fisher matrix of one panel by direct quadrature of every upper-triangular entry.

    Parameters
    ----------
    scenario : Scenario
        Terminal, wavelength and noise level; phase_unknown selects 4x4.
    panel : Panel, optional
        Panel to integrate over (defaults to the scenario's first panel).
    spec : QuadratureSpec, optional
    check_phase_column : bool
        With an unknown phase, re-derive the fourth column from g-integrals
        and record the largest deviation in diagnostics.
    """
    panel = scenario.panel if panel is None else panel
    spec = QuadratureSpec() if spec is None else spec
    t = scenario.terminal.relative_to(panel)
    dim = scenario.dim
    pairs = upper_pairs(dim)

    def f(x, y):
        return integrand_stack(t, SurfacePoint(x, y), scenario.lam, pairs)

    result = integrate_disk(f, panel.radius, spec, focus=(t.r_perp, t.z0))
    c = 2.0 / scenario.n0
    F = np.zeros((dim, dim))
    for value, (i, j) in zip(result.value, pairs):
        F[i - 1, j - 1] = F[j - 1, i - 1] = c * value

    diagnostics = {'evaluations': result.evaluations}
    if scenario.phase_unknown and check_phase_column:
        column = fisher_phase_column(scenario, panel, spec)
        scale = np.max(np.abs(F[:, 3]))
        mismatch = float(np.max(np.abs(column.exact - F[:, 3])) / scale)
        diagnostics['phase_column_mismatch'] = mismatch
        diagnostics['phase_column_printed_mismatch'] = float(
            np.max(np.abs(column.printed - F[:, 3])) / scale)
        if mismatch > 1e-8:
            logger.warning("phase column from g-integrals differs from direct quadrature by %.3g",
                           mismatch)
    return FisherMatrix(F, 'numeric', quad_err=c * result.error_estimate,
                        diagnostics=diagnostics)


def fisher_discrete(scenario, panel=None, pitch=None):
    """Fisher matrix from a lattice of discrete elements (brute-force oracle)."""
    panel = scenario.panel if panel is None else panel
    dim = scenario.dim
    c = 2.0 / scenario.n0
    F = np.zeros((dim, dim))
    n_elements = None
    for i, j in upper_pairs(dim):
        s = discrete_element_sum(i, j, scenario, panel, pitch)
        F[i - 1, j - 1] = F[j - 1, i - 1] = c * s.value
        n_elements = s.n_elements
    return FisherMatrix(F, 'oracle', diagnostics={'n_elements': n_elements})
