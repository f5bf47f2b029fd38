import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from tqdm import tqdm

from lis_crlb.src.closed_form import crlb_cpl_closed
from lis_crlb.src.fisher import (FisherMatrix, SingularFisher, crlb_from_fisher,
                                 fisher_numeric)
from lis_crlb.src.geometry import Panel, Scenario, ScenarioError, Terminal

logger = logging.getLogger(__name__)

SPLITS = ('single', 'quad', 'hex16')


@dataclass(frozen=True)
class Deployment:
    """A W x H wall carrying the same total disk area as one panel of radius R.

    quad: four disks of radius R/2 at (+-W/4, +-H/4).
    hex16: sixteen disks of radius R/4 on the 4x4 grid (+-W/8 * {1, 3}, +-H/8 * {1, 3}).
    """
    W: float
    H: float
    R: float
    split: str = 'single'

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ScenarioError("split must be one of %s, got %r" % (SPLITS, self.split))
        if self.W < 0 or self.H < 0:
            raise ScenarioError("Wall size must be non-negative")
        if not self.R > 0:
            raise ScenarioError("Panel radius must be positive, got R=%r" % self.R)

    def panels(self):
        if self.split == 'single':
            return (Panel(self.R),)
        if self.split == 'quad':
            return tuple(Panel(self.R / 2, sx * self.W / 4, sy * self.H / 4)
                         for sx in (-1, 1) for sy in (-1, 1))
        offsets = (-3, -1, 1, 3)
        return tuple(Panel(self.R / 4, ix * self.W / 8, iy * self.H / 8)
                     for ix in offsets for iy in offsets)

    def total_area(self):
        return sum(math.pi * p.radius ** 2 for p in self.panels())


@dataclass(frozen=True)
class McConfig:
    n_terminals: int = 1000
    xy_range: float = 2.0
    z0: float = 12.0
    seed: int = 0

    def __post_init__(self):
        if self.n_terminals < 1:
            raise ScenarioError("n_terminals must be at least 1")
        if self.xy_range < 0:
            raise ScenarioError("xy_range must be non-negative")
        if not self.z0 > 0:
            raise ScenarioError("z0 must be positive")


def multi_panel_fisher(deployment, terminal, lam, n0=2.0, phase_unknown=False, spec=None):
    """Joint Fisher matrix of all panels: the sum of the per-panel matrices."""
    panels = deployment.panels()
    scenario = Scenario(terminal, panels, lam, n0=n0, phase_unknown=phase_unknown)
    total = None
    quad_err = 0.0
    for panel in panels:
        f = fisher_numeric(scenario, panel, spec, check_phase_column=False)
        total = f.entries.copy() if total is None else total + f.entries
        quad_err += f.quad_err
    return FisherMatrix(total, 'numeric', quad_err=quad_err,
                        diagnostics={'panels': len(panels)})


@dataclass(frozen=True)
class QuadFarField:
    D: float
    i_xy: float
    i_z: float
    i_xy_full: float
    i_z_full: float
    i_xy_sparse: float


def quad_farfield_fisher(W, H, R, z0, lam, n0=2.0):
    """Far-field Fisher information of the four-panel split for a terminal at (0, 0, z0).

    i_xy, i_z assume D << z0 with D = sqrt(W^2 + H^2)/4; the *_full values keep
    the (z0^2 + D^2)^(5/2) factor and i_xy_sparse is the R << D limit.
    """
    D = math.sqrt(W ** 2 + H ** 2) / 4
    c = 2.0 / n0
    pi2 = math.pi ** 2
    a = (z0 ** 2 + D ** 2) ** 2.5
    return QuadFarField(
        D=D,
        i_xy=c * pi2 * R ** 4 / (4 * lam ** 2 * z0 ** 4) * (0.25 + 2 * D ** 2 / R ** 2),
        i_z=c * pi2 * R ** 2 / (lam ** 2 * z0 ** 2),
        i_xy_full=c * (pi2 * z0 * R ** 4 / (16 * lam ** 2 * a)
                       + pi2 * D ** 2 * z0 * R ** 2 / (2 * lam ** 2 * a)),
        i_z_full=c * pi2 * R ** 2 * z0 ** 3 / (lam ** 2 * a),
        i_xy_sparse=c * pi2 * D ** 2 * R ** 2 / (2 * lam ** 2 * z0 ** 4),
    )


def split_threshold(W, H):
    """Radius below which four separated quarter-area panels beat one panel in x and y."""
    return math.sqrt((W ** 2 + H ** 2) / 6)


def locate_split_crossover(W, H, z0, lam, spec=None, bracket=(1.0, 4.0), xtol=1e-4):
    """Radius where the quad split and the single panel give the same C_x on the CPL."""
    terminal = Terminal(0.0, 0.0, z0)

    def log_ratio(R):
        quad = crlb_from_fisher(multi_panel_fisher(Deployment(W, H, R, 'quad'),
                                                   terminal, lam, spec=spec))
        central = crlb_cpl_closed(z0, R, lam)
        return math.log(quad.c_x / central.c_x)

    return brentq(log_ratio, bracket[0], bracket[1], xtol=xtol)


@dataclass(frozen=True, eq=False)
class McStats:
    """Mean CRLB per dimension and the sorted per-dimension samples for CDFs."""
    mean: np.ndarray
    samples: np.ndarray
    positions: np.ndarray
    n_excluded: int

    @property
    def n_used(self):
        return self.samples.shape[0]


def terminal_draw(mc_config, i):
    """Terminal i of the population; depends only on (seed, i)."""
    rng = np.random.default_rng(np.random.SeedSequence(mc_config.seed, spawn_key=(i,)))
    x0, y0 = rng.uniform(-mc_config.xy_range, mc_config.xy_range, size=2)
    return Terminal(float(x0), float(y0), mc_config.z0)


def monte_carlo_stats(deployment, mc_config, lam, phase_unknown=False, n0=2.0, spec=None,
                      workers=1, progress=False):
    """CRLB statistics over uniformly drawn terminals at a fixed height.

    Terminals whose Fisher matrix cannot be inverted are excluded and
    counted. Results do not depend on the number of workers.
    """
    def one(i):
        terminal = terminal_draw(mc_config, i)
        try:
            report = crlb_from_fisher(multi_panel_fisher(deployment, terminal, lam, n0,
                                                         phase_unknown, spec))
        except SingularFisher:
            return terminal, None
        return terminal, report.as_array()

    n = mc_config.n_terminals
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        results = list(tqdm(executor.map(one, range(n)), total=n, disable=not progress,
                            desc='%s R=%g' % (deployment.split, deployment.R)))

    positions = np.array([[t.x0, t.y0, t.z0] for t, _ in results])
    rows = [c for _, c in results if c is not None]
    n_excluded = n - len(rows)
    if n_excluded:
        logger.warning("%d of %d terminals excluded: singular Fisher matrix", n_excluded, n)
    if not rows:
        raise SingularFisher("Every drawn terminal produced a singular Fisher matrix")
    values = np.array(rows)
    mean = values.mean(axis=0)
    return McStats(mean=mean, samples=np.sort(values, axis=0), positions=positions,
                   n_excluded=n_excluded)
