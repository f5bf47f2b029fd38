import sys
import csv
import json
import math
import logging
import argparse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from tqdm import tqdm

from lis_crlb.src.geometry import (LisError, ScenarioError, Terminal, Panel, Scenario,
                                   default_scenario, derive, mild_conditions_hold)
from lis_crlb.src.load_scenario import ConfigError, load_scenario, scenario_from_dict
from lis_crlb.src.signal import (SurfacePoint, eta, noiseless_signal, spatial_gradient,
                                 fisher_integrand)
from lis_crlb.src.quadrature import (QuadratureSpec, NonConvergence, TooFewElements,
                                     integrate_disk, g_numeric, g_moment_numeric,
                                     g_closed_cpl, discrete_element_sum)
from lis_crlb.src.fisher import (FisherMatrix, CrlbReport, SingularFisher, crlb_from_fisher,
                                 fisher_numeric, fisher_discrete, fisher_phase_column)
from lis_crlb.src.closed_form import (f_functions, fisher_cpl_closed, fisher_cpl_g_route,
                                      crlb_cpl_closed, crlb_approx_noncpl, crlb_farfield_approx,
                                      crlb_phase_cpl_closed, crlb_phase_schur,
                                      phase_smalltau_approx, phase_regime, asymptotics)
from lis_crlb.src.spherical import (SingularGeometry, sph_from_cart, cart_from_sph, jacobian,
                                    crlb_spherical)
from lis_crlb.src.deployment import (Deployment, McConfig, multi_panel_fisher,
                                     quad_farfield_fisher, split_threshold,
                                     locate_split_crossover, monte_carlo_stats)

logger = logging.getLogger(__name__)

METHODS = ('numeric', 'closed', 'approx', 'farfield', 'oracle')
MODES = ('cpl-sweep', 'offcpl-sweep', 'approx-error', 'ring-sweep', 'phase-sweep',
         'deploy', 'validate')
STATS = ('cpl', 'mean', 'cdf')

BASE_COLUMNS = ['method', 'lambda_m', 'z0_m', 'x0_m', 'y0_m', 'R_m', 'tau',
                'c_x_m2', 'c_y_m2', 'c_z_m2', 'c_phase_rad2', 'cond', 'quad_err']
MODE_COLUMNS = {
    'cpl-sweep': ['n_elements'],
    'offcpl-sweep': ['slope_xy', 'slope_z'],
    'approx-error': ['err_x', 'err_y', 'err_z'],
    'ring-sweep': ['psi_rad', 'norm_x', 'norm_y', 'norm_z'],
    'phase-sweep': ['phase', 'regime'],
    'deploy': ['split', 'stat', 'rank', 'n_used', 'n_excluded'],
}

# tau of a half-wavelength array of about 200 elements at z0=4, lambda=0.1
N200_TAU = 0.01
ORACLE_MAX_ELEMENTS = 4 * 10 ** 6

NUMERICAL_ERRORS = (NonConvergence, SingularFisher, SingularGeometry, TooFewElements)


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter: R, tau, x0 or psi over a log or linear grid."""
    parameter: str
    start: float
    stop: float
    num: int
    scale: str = 'log'

    def __post_init__(self):
        if self.parameter not in ('R', 'tau', 'x0', 'psi'):
            raise ScenarioError("Sweep parameter must be R, tau, x0 or psi, got %r"
                                % (self.parameter,))
        if self.scale not in ('log', 'lin'):
            raise ScenarioError("Sweep scale must be 'log' or 'lin', got %r" % (self.scale,))
        if self.num < 1:
            raise ScenarioError("Sweep needs at least one point")
        if (self.scale == 'log' or self.parameter in ('R', 'tau')) \
                and not (self.start > 0 and self.stop > 0):
            raise ScenarioError("Sweep over %s needs positive bounds, got [%g, %g]"
                                % (self.parameter, self.start, self.stop))

    def values(self):
        if self.num == 1:
            return np.array([float(self.start)])
        if self.scale == 'log':
            return np.geomspace(self.start, self.stop, self.num)
        return np.linspace(self.start, self.stop, self.num)


def _format(value):
    if value is None:
        return ''
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(rows, columns, out=None):
    """Writes rows (dicts) with a fixed header; '-' or None means stdout."""
    fp = sys.stdout if out in (None, '-') else open(out, 'w', newline='', encoding='utf8')
    try:
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row.get(c)) for c in columns])
    finally:
        if fp is not sys.stdout:
            fp.close()


def _base_row(method, terminal, lam, R, tau=None, z0=None):
    z0 = terminal.z0 if terminal is not None else z0
    return {'method': method,
            'lambda_m': lam,
            'z0_m': z0,
            'x0_m': terminal.x0 if terminal is not None else None,
            'y0_m': terminal.y0 if terminal is not None else None,
            'R_m': R,
            'tau': (R / z0) ** 2 if tau is None else tau}


def crlb_row(method, terminal, lam, R, report, tau=None, **extra):
    row = _base_row(method, terminal, lam, R, tau)
    row.update({'c_x_m2': report.c_x, 'c_y_m2': report.c_y, 'c_z_m2': report.c_z,
                'c_phase_rad2': report.c_phase, 'cond': report.condition_number,
                'quad_err': report.quad_err})
    row.update(extra)
    return row


def _parallel_map(fn, items, workers=1, progress=False, desc=None):
    """fn over items, results in input order whatever the completion order."""
    items = list(items)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        return list(tqdm(executor.map(fn, items), total=len(items),
                         disable=not progress, desc=desc))


def _single_panel(terminal, R, lam, n0=2.0, phase_unknown=False):
    return Scenario(terminal, (Panel(R),), lam, n0=n0, phase_unknown=phase_unknown)


def evaluate(method, scenario, spec=None):
    """CRLB of the scenario's first panel by one of METHODS."""
    panel = scenario.panel
    t = scenario.terminal.relative_to(panel)
    if method == 'numeric':
        return crlb_from_fisher(fisher_numeric(scenario, spec=spec))
    if method == 'oracle':
        return crlb_from_fisher(fisher_discrete(scenario))
    if method == 'closed':
        if not t.on_cpl():
            raise ScenarioError("Closed-form CRLB needs a terminal on the CPL, got x0=%g y0=%g"
                                % (t.x0, t.y0))
        if scenario.phase_unknown:
            return crlb_phase_cpl_closed(t.z0, panel.radius, scenario.lam, scenario.n0)
        return crlb_cpl_closed(t.z0, panel.radius, scenario.lam, scenario.n0)
    if method not in METHODS:
        raise ValueError("method must be one of %s, got %r" % (METHODS, method))
    if scenario.phase_unknown:
        raise ScenarioError("The %s CRLB is only available with a known phase" % method)
    if method == 'approx':
        return crlb_approx_noncpl(t, panel.radius, scenario.lam, scenario.n0)
    return crlb_farfield_approx(t, panel.radius, scenario.lam, scenario.n0)


def cpl_tau_grid(sweep):
    """Sweep values with the ~200-element point added when it lies inside the range."""
    taus = [float(v) for v in sweep.values()]
    if min(taus) <= N200_TAU <= max(taus):
        taus = [t for t in taus if abs(t - N200_TAU) > 1e-9 * N200_TAU] + [N200_TAU]
    return sorted(set(taus))


def cpl_sweep(taus, z0=4.0, lam=0.1, n0=2.0, methods=('closed', 'numeric'),
              phase_unknown=False, spec=None, workers=1, progress=False):
    """CRLBs for a terminal on the CPL as the panel grows, R = z0 sqrt(tau).

    Parameters
    ----------
    taus : sequence of float
        Normalized panel areas (R/z0)^2.
    methods : sequence of str
        Any of METHODS; 'oracle' is skipped where the element lattice would
        exceed ORACLE_MAX_ELEMENTS.
    """
    terminal = Terminal(0.0, 0.0, z0)

    def point(tau):
        R = z0 * math.sqrt(tau)
        scenario = _single_panel(terminal, R, lam, n0, phase_unknown)
        n_elements = int(round(math.pi * R ** 2 / (lam / 2) ** 2))
        rows = []
        for method in methods:
            if method == 'oracle' and n_elements > ORACLE_MAX_ELEMENTS:
                logger.warning("skipping oracle at tau=%g: %d elements", tau, n_elements)
                continue
            report = evaluate(method, scenario, spec)
            rows.append(crlb_row(method, terminal, lam, R, report, tau=tau,
                                 n_elements=n_elements))
        return rows

    results = _parallel_map(point, taus, workers, progress, desc='cpl sweep')
    return [row for rows in results for row in rows]


def offcpl_sweep(taus, x0s=(2.0, 4.0, 8.0), z0s=(4.0, 6.0), lam=0.1, n0=2.0,
                 methods=('numeric',), spec=None, workers=1, progress=False):
    """CRLBs for terminals at (x0, 0, z0) against tau, with local log-log slopes."""
    taus = sorted(float(t) for t in taus)
    grid = [(z0, x0, tau) for z0 in z0s for x0 in x0s for tau in taus]

    def point(args):
        z0, x0, tau = args
        R = z0 * math.sqrt(tau)
        terminal = Terminal(x0, 0.0, z0)
        scenario = _single_panel(terminal, R, lam, n0)
        return [crlb_row(m, terminal, lam, R, evaluate(m, scenario, spec), tau=tau)
                for m in methods]

    results = _parallel_map(point, grid, workers, progress, desc='off-CPL sweep')

    n = len(taus)
    if n >= 2:
        log_tau = np.log(taus)
        for start in range(0, len(results), n):
            block = results[start:start + n]
            for mi in range(len(methods)):
                series = [rows[mi] for rows in block]
                slope_xy = np.gradient(np.log([r['c_x_m2'] for r in series]), log_tau)
                slope_z = np.gradient(np.log([r['c_z_m2'] for r in series]), log_tau)
                for row, sxy, sz in zip(series, slope_xy, slope_z):
                    row['slope_xy'] = float(sxy)
                    row['slope_z'] = float(sz)
    return [row for rows in results for row in rows]


def approx_error(x0s=range(1, 9), z0=8.0, R=0.5, lam=0.1, n0=2.0, spec=None,
                 workers=1, progress=False):
    """Normalized error of the off-CPL approximation against quadrature at x0 = y0."""
    def point(x0):
        terminal = Terminal(float(x0), float(x0), z0)
        scenario = _single_panel(terminal, R, lam, n0)
        numeric = evaluate('numeric', scenario, spec)
        approx = evaluate('approx', scenario)
        errors = {'err_x': abs(approx.c_x - numeric.c_x) / numeric.c_x,
                  'err_y': abs(approx.c_y - numeric.c_y) / numeric.c_y,
                  'err_z': abs(approx.c_z - numeric.c_z) / numeric.c_z}
        return [crlb_row('numeric', terminal, lam, R, numeric),
                crlb_row('approx', terminal, lam, R, approx, **errors)]

    results = _parallel_map(point, x0s, workers, progress, desc='approximation error')
    return [row for rows in results for row in rows]


def ring_sweep(psis, r=4.0, z0=4.0, R=1.0, lam=0.1, n0=2.0, spec=None, workers=1,
               progress=False):
    """CRLBs for terminals on a circle of radius r parallel to the panel, normalized to psi=0."""
    def point(psi):
        terminal = Terminal(r * math.cos(psi), r * math.sin(psi), z0)
        return terminal, evaluate('numeric', _single_panel(terminal, R, lam, n0), spec)

    psis = [float(p) for p in psis]
    results = _parallel_map(point, psis, workers, progress, desc='ring sweep')
    if psis[0] == 0.0:
        reference = results[0][1]
    else:
        reference = point(0.0)[1]

    rows = []
    for psi, (terminal, report) in zip(psis, results):
        rows.append(crlb_row('numeric', terminal, lam, R, report, psi_rad=psi,
                             norm_x=report.c_x / reference.c_x,
                             norm_y=report.c_y / reference.c_y,
                             norm_z=report.c_z / reference.c_z))
    return rows


def phase_sweep(taus, z0=4.0, lam=0.1, n0=2.0, methods=('closed', 'approx'), spec=None,
                workers=1, progress=False):
    """Known- against unknown-phase CRLBs on the CPL, with the small-tau approximations.

    'approx' rows carry only C_z and C_phase. Every row is tagged with the
    regime of the unknown-phase C_z at its tau.
    """
    terminal = Terminal(0.0, 0.0, z0)

    def point(tau):
        R = z0 * math.sqrt(tau)
        regime = phase_regime(tau, lam, z0)
        rows = []
        for method in methods:
            if method == 'approx':
                c_z, c_phase = phase_smalltau_approx(tau, lam, z0)
                row = _base_row('approx', terminal, lam, R, tau)
                row.update({'c_z_m2': c_z * n0 / 2, 'c_phase_rad2': c_phase * n0 / 2,
                            'phase': 'unknown', 'regime': regime})
                rows.append(row)
                continue
            for phase_unknown in (False, True):
                scenario = _single_panel(terminal, R, lam, n0, phase_unknown)
                rows.append(crlb_row(method, terminal, lam, R, evaluate(method, scenario, spec),
                                     tau=tau, phase='unknown' if phase_unknown else 'known',
                                     regime=regime))
        return rows

    results = _parallel_map(point, taus, workers, progress, desc='phase sweep')
    return [row for rows in results for row in rows]


def deploy_sweep(Rs, splits=('single', 'quad', 'hex16'), W=4.0, H=4.0, z0=8.0, lam=0.1,
                 n0=2.0, phase_unknown=False, spec=None, workers=1, progress=False):
    """CRLBs at the CPL terminal (0, 0, z0) for each split and area budget R."""
    terminal = Terminal(0.0, 0.0, z0)
    grid = [(R, split) for R in Rs for split in splits]

    def point(args):
        R, split = args
        fisher = multi_panel_fisher(Deployment(W, H, R, split), terminal, lam, n0,
                                    phase_unknown, spec)
        return crlb_row('numeric', terminal, lam, R, crlb_from_fisher(fisher),
                        split=split, stat='cpl')

    return _parallel_map(point, grid, workers, progress, desc='deployment sweep')


def _mc_row(deployment, mc_config, lam, stat, values, stats, rank=None):
    row = _base_row('numeric', None, lam, deployment.R, z0=mc_config.z0)
    row.update({'c_x_m2': values[0], 'c_y_m2': values[1], 'c_z_m2': values[2],
                'c_phase_rad2': values[3] if len(values) > 3 else None,
                'split': deployment.split, 'stat': stat, 'rank': rank,
                'n_used': stats.n_used, 'n_excluded': stats.n_excluded})
    return row


def deploy_mean(Rs, mc_config, splits=('single', 'quad', 'hex16'), W=4.0, H=4.0, lam=0.1,
                n0=2.0, phase_unknown=False, spec=None, workers=1, progress=False):
    """Mean CRLB over a terminal population for each split and area budget R."""
    rows = []
    for R in Rs:
        for split in splits:
            deployment = Deployment(W, H, R, split)
            stats = monte_carlo_stats(deployment, mc_config, lam, phase_unknown, n0, spec,
                                      workers, progress)
            rows.append(_mc_row(deployment, mc_config, lam, 'mean', stats.mean, stats))
    return rows


def deploy_cdf(R, mc_config, splits=('single', 'quad', 'hex16'), W=4.0, H=4.0, lam=0.1,
               n0=2.0, phase_unknown=False, spec=None, workers=1, progress=False):
    """Sorted per-dimension CRLB samples at one budget R, one row per rank."""
    rows = []
    for split in splits:
        deployment = Deployment(W, H, R, split)
        stats = monte_carlo_stats(deployment, mc_config, lam, phase_unknown, n0, spec,
                                  workers, progress)
        for rank, values in enumerate(stats.samples, start=1):
            rows.append(_mc_row(deployment, mc_config, lam, 'cdf', values, stats, rank))
    return rows


def _rel(a, b):
    return abs(a - b) / abs(b)


def _slope(xs, ys):
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def _record(check, value, tolerance, target=None):
    if target is None:
        passed = value <= tolerance
        record = {'check': check, 'passed': bool(passed), 'value': float(value),
                  'tolerance': tolerance}
    else:
        passed = abs(value - target) <= tolerance
        record = {'check': check, 'passed': bool(passed), 'value': float(value),
                  'tolerance': tolerance, 'target': target}
    return record


def _check_closed_form_fidelity(spec):
    worst = 0.0
    for z0 in (2.0, 4.0, 8.0):
        for R in (0.5, 1.0, 2.0):
            scenario = _single_panel(Terminal(0.0, 0.0, z0), R, 0.1)
            numeric = np.diag(fisher_numeric(scenario, spec=spec).entries)
            closed = np.diag(fisher_cpl_closed(z0, R, 0.1).entries)
            worst = max(worst, float(np.max(np.abs(numeric - closed) / closed)))
    return [_record('closed_form_fidelity', worst, 1e-6)]


def _check_fundamental_limit(spec):
    lam, z0, tau = 0.1, 4.0, 1e4
    limit = asymptotics(tau, lam, z0).limit
    R = z0 * math.sqrt(tau)
    cpl = crlb_cpl_closed(z0, R, lam)
    off = evaluate('numeric', _single_panel(Terminal(4.0, 0.0, z0), R, lam), spec)
    return [_record('fundamental_limit_cpl_xy', _rel(cpl.c_x, limit), 0.02),
            _record('fundamental_limit_cpl_z', _rel(cpl.c_z, limit), 0.01),
            _record('fundamental_limit_offcpl',
                    max(_rel(off.c_x, limit), _rel(off.c_y, limit), _rel(off.c_z, limit)), 0.02)]


def _check_slope_laws(spec):
    taus = np.geomspace(1e-3, 1e-2, 9)
    reports = [crlb_cpl_closed(4.0, 4.0 * math.sqrt(t), 0.1) for t in taus]
    return [_record('slope_xy', _slope(taus, [r.c_x for r in reports]), 0.05, target=-2.0),
            _record('slope_z', _slope(taus, [r.c_z for r in reports]), 0.05, target=-1.0)]


def _check_approximation_accuracy(spec):
    rows = approx_error(range(1, 9), z0=8.0, R=0.5, lam=0.1, spec=spec)
    approx = [r for r in rows if r['method'] == 'approx']
    err_xy = max(max(r['err_x'], r['err_y']) for r in approx)
    err_z = max(r['err_z'] for r in approx)
    return [_record('approximation_error_xy', err_xy, 0.006),
            _record('approximation_error_z', err_z, 0.02)]


def _check_phase_limits(spec):
    lam, z0 = 0.1, 4.0
    records = []
    for tau, tol_ratio, tol_phase in ((1e4, 0.05, 0.05), (1e6, 0.02, 0.01)):
        R = z0 * math.sqrt(tau)
        known = crlb_cpl_closed(z0, R, lam)
        unknown = crlb_phase_cpl_closed(z0, R, lam)
        limit_phase = asymptotics(tau, lam, z0, phase_unknown=True).limit_phase
        records.append(_record('phase_limit_z_ratio@tau=%g' % tau,
                               _rel(unknown.c_z / known.c_z, 4.0), tol_ratio))
        records.append(_record('phase_limit_c_phase@tau=%g' % tau,
                               _rel(unknown.c_phase, limit_phase), tol_phase))
    return records


def _check_phase_ratio(spec):
    lam, z0 = 0.1, 4.0
    target = 4 * math.pi ** 2 / lam ** 2
    worst = 0.0
    for tau in np.geomspace(1e-4, 2e-3, 5):
        report = crlb_phase_cpl_closed(z0, z0 * math.sqrt(tau), lam)
        worst = max(worst, _rel(report.c_phase / report.c_z, target))
    return [_record('phase_ratio', worst, 0.05)]


def _check_third_order_regime(spec):
    lam, z0 = 0.01, 40.0

    def slope(lo, hi):
        taus = np.geomspace(lo, hi, 5)
        return _slope(taus, [crlb_phase_cpl_closed(z0, z0 * math.sqrt(t), lam).c_z
                             for t in taus])

    return [_record('phase_unknown_z_slope_cubic', slope(4e-3, 8e-3), 0.1, target=-3.0),
            _record('phase_unknown_z_slope_linear', slope(1e-6, 1e-5), 0.1, target=-1.0)]


def _check_deployment_threshold(spec):
    W = H = 4.0
    z0, lam = 8.0, 0.1
    r_star = locate_split_crossover(W, H, z0, lam, spec)
    quad = crlb_from_fisher(multi_panel_fisher(Deployment(W, H, 1.0, 'quad'),
                                               Terminal(0.0, 0.0, z0), lam, spec=spec))
    central = crlb_cpl_closed(z0, 1.0, lam)
    return [_record('split_crossover', _rel(r_star, split_threshold(W, H)), 0.1),
            _record('split_c_z_agreement', _rel(quad.c_z, central.c_z), 0.1)]


def _check_symmetry(spec):
    z0, R, lam = 4.0, 1.0, 0.1
    reports = [evaluate('numeric', _single_panel(Terminal(4 * math.cos(p), 4 * math.sin(p), z0),
                                                 R, lam), spec)
               for p in (0.0, 0.7, 2.1, 4.0)]

    def spread(values):
        return (max(values) - min(values)) / min(values)

    azimuthal = max(spread([r.c_z for r in reports]),
                    spread([r.c_x + r.c_y for r in reports]))

    base = _single_panel(Terminal(1.0, 0.5, z0), R, lam)
    f0 = fisher_numeric(base, spec=spec).entries
    f1 = fisher_numeric(replace(base, phi=1.3), spec=spec).entries
    phase_shift = 0.0 if np.array_equal(f0, f1) else float(np.max(np.abs(f0 - f1)))

    F = fisher_numeric(_single_panel(Terminal(0.0, 0.0, z0), R, lam), spec=spec).entries
    off_diagonal = float(np.max(np.abs(F - np.diag(np.diag(F)))) / np.trace(F))
    return [_record('azimuthal_invariance', azimuthal, 1e-6),
            _record('phase_independence', phase_shift, 0.0),
            _record('cpl_diagonal', off_diagonal, 1e-9)]


def _check_oracle_equivalence(spec):
    scenario = _single_panel(Terminal(0.0, 0.0, 4.0), 1.0, 0.1)
    discrete = fisher_discrete(scenario)
    numeric = fisher_numeric(scenario, spec=spec)
    d, n = np.diag(discrete.entries), np.diag(numeric.entries)
    expected = 4 * math.pi * 1.0 ** 2 / 0.1 ** 2
    return [_record('oracle_fisher', float(np.max(np.abs(d - n) / n)), 0.01),
            _record('oracle_element_count',
                    _rel(discrete.diagnostics['n_elements'], expected), 0.02)]


def _check_noise_linearity(spec):
    terminal = Terminal(1.0, 0.5, 4.0)
    base = evaluate('numeric', _single_panel(terminal, 1.0, 0.1, n0=2.0), spec).as_array()
    worst = 0.0
    for k in (0.5, 2.0, 10.0):
        scaled = evaluate('numeric', _single_panel(terminal, 1.0, 0.1, n0=2.0 * k), spec)
        worst = max(worst, float(np.max(np.abs(scaled.as_array() / (k * base) - 1))))
    return [_record('noise_linearity', worst, 1e-10)]


def _check_spherical_consistency(spec):
    z0, R, lam = 4.0, 1.0, 0.1
    cpl = crlb_cpl_closed(z0, R, lam)
    near = Terminal(1e-3, 0.0, z0)
    sph = crlb_spherical(evaluate('numeric', _single_panel(near, R, lam), spec), near)
    z1 = sph_from_cart(near).z1

    far = Terminal(2.0, 1.0, 8.0)
    taus = np.geomspace(1e-4, 1e-3, 5)
    far_sph = [crlb_spherical(crlb_approx_noncpl(far, 8.0 * math.sqrt(t), lam), far)
               for t in taus]
    return [_record('spherical_range_cpl_limit', _rel(sph.c_z1, cpl.c_z), 0.01),
            _record('spherical_elevation_cpl_limit', _rel(sph.c_phi, cpl.c_x / z1 ** 2), 0.01),
            _record('spherical_elevation_slope', _slope(taus, [s.c_phi for s in far_sph]),
                    0.05, target=-2.0),
            _record('spherical_azimuth_slope', _slope(taus, [s.c_psi for s in far_sph]),
                    0.05, target=-2.0),
            _record('spherical_range_slope', _slope(taus, [s.c_z1 for s in far_sph]),
                    0.05, target=-1.0)]


VALIDATION_CHECKS = {
    'closed_form_fidelity': _check_closed_form_fidelity,
    'fundamental_limit': _check_fundamental_limit,
    'slope_laws': _check_slope_laws,
    'approximation_accuracy': _check_approximation_accuracy,
    'phase_limits': _check_phase_limits,
    'phase_ratio': _check_phase_ratio,
    'third_order_regime': _check_third_order_regime,
    'deployment_threshold': _check_deployment_threshold,
    'symmetry': _check_symmetry,
    'oracle_equivalence': _check_oracle_equivalence,
    'noise_linearity': _check_noise_linearity,
    'spherical_consistency': _check_spherical_consistency,
}


def run_validation(spec=None, only=None, progress=False):
    """Runs the accuracy and invariant checks.

    Parameters
    ----------
    spec : QuadratureSpec, optional
    only : sequence of str, optional
        Names from VALIDATION_CHECKS; all checks when None.

    Returns a list of {check, passed, value, tolerance[, target]} records.
    """
    names = list(VALIDATION_CHECKS) if only is None else list(only)
    unknown = [n for n in names if n not in VALIDATION_CHECKS]
    if unknown:
        raise ValueError("Unknown validation check(s): %s" % ', '.join(unknown))
    records = []
    for name in tqdm(names, disable=not progress, desc='validation'):
        records.extend(VALIDATION_CHECKS[name](spec))
    return records


# values baked into each figure preset; explicit flags override them
PRESETS = {
    'fig3': {'mode': 'cpl-sweep', 'z0': [4.0], 'x0': [0.0], 'start': 1e-4, 'stop': 1e4,
             'num': 33, 'scale': 'log', 'methods': ['closed', 'numeric']},
    'fig6': {'mode': 'offcpl-sweep', 'x0': [2.0, 4.0, 8.0], 'z0': [4.0, 6.0], 'start': 1e-3,
             'stop': 1e3, 'num': 25, 'scale': 'log', 'methods': ['numeric']},
    'fig8': {'mode': 'approx-error', 'x0': [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
             'z0': [8.0], 'radius': 0.5},
    'fig9': {'mode': 'ring-sweep', 'z0': [4.0], 'radius': 1.0, 'ring_radius': 4.0,
             'start': 0.0, 'stop': 2 * math.pi, 'num': 37, 'scale': 'lin'},
    'fig10': {'mode': 'phase-sweep', 'z0': [4.0], 'start': 1e-4, 'stop': 1e4, 'num': 33,
              'scale': 'log', 'methods': ['closed', 'approx']},
    'fig11': {'mode': 'deploy', 'stat': 'cpl', 'z0': [8.0], 'W': 4.0, 'H': 4.0,
              'start': 0.1, 'stop': 3.0, 'num': 30, 'scale': 'lin'},
    'fig12': {'mode': 'deploy', 'stat': 'mean', 'z0': [12.0], 'W': 4.0, 'H': 4.0,
              'start': 0.25, 'stop': 3.0, 'num': 12, 'scale': 'lin', 'n_terminals': 1000,
              'xy_range': 2.0},
    'fig13': {'mode': 'deploy', 'stat': 'cdf', 'z0': [12.0], 'W': 4.0, 'H': 4.0,
              'radius': 1.39, 'n_terminals': 1000, 'xy_range': 2.0},
}
MODE_PRESET = {'cpl-sweep': 'fig3', 'offcpl-sweep': 'fig6', 'approx-error': 'fig8',
               'ring-sweep': 'fig9', 'phase-sweep': 'fig10', 'deploy': 'fig11',
               'validate': None}

DEFAULTS = {
    'lam': 0.1, 'n0': 2.0, 'phase_unknown': False,
    'x0': [0.0], 'y0': 0.0, 'z0': [4.0], 'radius': 1.0,
    'start': 1e-4, 'stop': 1e4, 'num': 33, 'scale': 'log',
    'methods': ['closed', 'numeric'], 'ring_radius': 4.0,
    'W': 4.0, 'H': 4.0, 'split': ['single', 'quad', 'hex16'], 'stat': 'cpl',
    'n_terminals': 1000, 'xy_range': 2.0, 'seed': None, 'workers': 1, 'tol': None,
    'checks': None,
}


def _scenario_from_settings(settings):
    return _single_panel(Terminal(settings['x0'][0], settings['y0'], settings['z0'][0]),
                         settings['radius'], settings['lam'], settings['n0'],
                         settings['phase_unknown'])


def resolve_settings(args, mode):
    """Defaults, then the preset, then the scenario config, then explicit flags."""
    settings = dict(DEFAULTS)
    preset = args.preset or MODE_PRESET[mode]
    if preset:
        settings.update({k: v for k, v in PRESETS[preset].items() if k != 'mode'})

    if args.config:
        base = _scenario_from_settings(settings)
        scenario = load_scenario(args.config, base=base)
        # modes build their own panels: one disk at the origin, or the deploy splits
        if len(scenario.panels) != 1 or (scenario.panel.cx, scenario.panel.cy) != (0.0, 0.0):
            raise ConfigError("%s: the command line takes one panel centred at the origin, "
                              "got %s" % (args.config,
                                          ', '.join('r=%g at (%g, %g)' % (p.radius, p.cx, p.cy)
                                                    for p in scenario.panels)))
        if scenario.terminal != base.terminal:
            t = scenario.terminal
            settings.update(x0=[t.x0], y0=t.y0, z0=[t.z0])
        if scenario.panel != base.panel:
            settings['radius'] = scenario.panel.radius
        settings.update(lam=scenario.lam, n0=scenario.n0,
                        phase_unknown=scenario.phase_unknown)

    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _one(settings, key):
    values = settings[key]
    if len(values) != 1:
        raise ScenarioError("This mode takes a single %s, got %s" % (key, values))
    return values[0]


def _check_methods(methods):
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ScenarioError("Unknown method(s) %s; choose from %s" % (', '.join(bad), METHODS))


def _float_list(text):
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers, got %r" % text)


def _str_list(text):
    return [v.strip() for v in text.split(',') if v.strip()]


def _bool(text):
    return str(text).lower() == 'true'


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1; status 2 is kept for numerical failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, '%s: error: %s\n' % (self.prog, message))


def cmd(argv=None):
    """Function called when invoking from the terminal."""

    parser = _ArgumentParser(
        prog='lis_crlb',
        description="Cramer-Rao lower bounds for positioning a terminal with large intelligent surfaces."
    )

    # Explicit arguments

    parser.add_argument(
        '--mode', help='Mode for using the CLI (one of %s) [Required]' % ', '.join(MODES),
        nargs='?', dest='mode_flag')
    parser.add_argument(
        '--config', help="[all] Path of a JSON scenario file", nargs='?', default=None)
    parser.add_argument(
        '--out', help="[all] Output path ('-' for stdout)", nargs='?', default='-')
    parser.add_argument(
        '--tol', help="[all] Relative tolerance of the disk quadrature",
        nargs='?', default=None, type=float)
    parser.add_argument(
        '--seed', help="[deploy] Seed of the terminal population (required for mean/cdf)",
        nargs='?', default=None, type=int)
    parser.add_argument(
        '--preset', help="[all] Figure preset providing default values",
        nargs='?', default=None, choices=sorted(PRESETS))
    parser.add_argument(
        '--workers', help="[all] Number of worker threads",
        nargs='?', default=None, type=int)
    parser.add_argument(
        '--lambda', help="[all] Wavelength in meters", nargs='?', default=None, type=float,
        dest='lam')
    parser.add_argument(
        '--n0', help="[all] Noise power spectral density", nargs='?', default=None, type=float)
    parser.add_argument(
        '--phase_unknown', help="[cpl-sweep/deploy] Treat the common phase as unknown",
        nargs='?', default=None, type=_bool)
    parser.add_argument(
        '--x0', help="[offcpl-sweep/approx-error] Terminal x0 value(s), comma separated",
        nargs='?', default=None, type=_float_list)
    parser.add_argument(
        '--y0', help="[all] Terminal y0", nargs='?', default=None, type=float)
    parser.add_argument(
        '--z0', help="[all] Terminal height(s), comma separated", nargs='?', default=None,
        type=_float_list)
    parser.add_argument(
        '--radius', help="[approx-error/ring-sweep/deploy cdf] Panel radius R",
        nargs='?', default=None, type=float)
    parser.add_argument(
        '--start', help="[sweeps] First grid value (tau, R or psi)", nargs='?', default=None,
        type=float)
    parser.add_argument(
        '--stop', help="[sweeps] Last grid value", nargs='?', default=None, type=float)
    parser.add_argument(
        '--num', help="[sweeps] Number of grid points", nargs='?', default=None, type=int)
    parser.add_argument(
        '--scale', help="[sweeps] Grid spacing ('log' or 'lin')", nargs='?', default=None,
        choices=['log', 'lin'])
    parser.add_argument(
        '--methods', help="[sweeps] Methods to run, comma separated (%s)" % ', '.join(METHODS),
        nargs='?', default=None, type=_str_list)
    parser.add_argument(
        '--ring_radius', help="[ring-sweep] Lateral distance r of the terminal circle",
        nargs='?', default=None, type=float)
    parser.add_argument(
        '--W', help="[deploy] Wall width", nargs='?', default=None, type=float)
    parser.add_argument(
        '--H', help="[deploy] Wall height", nargs='?', default=None, type=float)
    parser.add_argument(
        '--split', help="[deploy] Splits to compare, comma separated (single, quad, hex16)",
        nargs='?', default=None, type=_str_list)
    parser.add_argument(
        '--stat', help="[deploy] 'cpl', 'mean' or 'cdf'", nargs='?', default=None,
        choices=STATS)
    parser.add_argument(
        '--n_terminals', help="[deploy] Monte Carlo population size", nargs='?',
        default=None, type=int)
    parser.add_argument(
        '--xy_range', help="[deploy] Terminals are drawn in [-xy_range, xy_range]^2",
        nargs='?', default=None, type=float)
    parser.add_argument(
        '--checks', help="[validate] Subset of checks, comma separated", nargs='?',
        default=None, type=_str_list)

    # Positional arguments
    parser.add_argument('mode', nargs='?')

    args = parser.parse_args(argv)
    mode = args.mode or args.mode_flag or (PRESETS[args.preset]['mode'] if args.preset else None)
    if mode not in MODES:
        parser.error("Mode must be one of %s" % ', '.join(MODES))

    logging.basicConfig(level=logging.WARNING, format='%(levelname)s %(name)s: %(message)s')

    try:
        settings = resolve_settings(args, mode)
        spec = QuadratureSpec() if settings['tol'] is None else QuadratureSpec(rel_tol=settings['tol'])
        if mode == 'validate':
            cmd_validate(spec=spec, checks=settings['checks'], out=args.out)
            return
        rows = run_mode(mode, settings, spec)
        write_csv(rows, BASE_COLUMNS + MODE_COLUMNS[mode], args.out)
        if args.out not in (None, '-'):
            print("Wrote %d rows to %s" % (len(rows), args.out), file=sys.stderr)
    except NUMERICAL_ERRORS as e:
        print("lis_crlb: numerical failure: %s" % e, file=sys.stderr)
        sys.exit(2)
    except (ScenarioError, ValueError) as e:
        print("lis_crlb: %s" % e, file=sys.stderr)
        sys.exit(1)


def run_mode(mode, settings, spec):
    """Dispatches a sweep mode to its cmd_* wrapper and returns the CSV rows."""
    common = {'lam': settings['lam'], 'n0': settings['n0'], 'spec': spec,
              'workers': settings['workers']}
    if mode == 'cpl-sweep':
        sweep = SweepSpec('tau', settings['start'], settings['stop'], settings['num'],
                          settings['scale'])
        return cmd_cpl_sweep(sweep=sweep, z0=_one(settings, 'z0'), methods=settings['methods'],
                             phase_unknown=settings['phase_unknown'], **common)
    if mode == 'offcpl-sweep':
        sweep = SweepSpec('tau', settings['start'], settings['stop'], settings['num'],
                          settings['scale'])
        return cmd_offcpl_sweep(sweep=sweep, x0s=settings['x0'], z0s=settings['z0'],
                                methods=settings['methods'], **common)
    if mode == 'approx-error':
        return cmd_approx_error(x0s=settings['x0'], z0=_one(settings, 'z0'),
                                R=settings['radius'], **common)
    if mode == 'ring-sweep':
        sweep = SweepSpec('psi', settings['start'], settings['stop'], settings['num'],
                          settings['scale'])
        return cmd_ring_sweep(sweep=sweep, r=settings['ring_radius'], z0=_one(settings, 'z0'),
                              R=settings['radius'], **common)
    if mode == 'phase-sweep':
        sweep = SweepSpec('tau', settings['start'], settings['stop'], settings['num'],
                          settings['scale'])
        return cmd_phase_sweep(sweep=sweep, z0=_one(settings, 'z0'),
                               methods=settings['methods'], **common)
    return cmd_deploy(settings=settings, **common)


def cmd_cpl_sweep(sweep, z0, lam, n0, methods, phase_unknown, spec, workers):
    """Wrapper script for the CPL sweep via the CLI."""
    _check_methods(methods)
    return cpl_sweep(cpl_tau_grid(sweep), z0=z0, lam=lam, n0=n0, methods=methods,
                     phase_unknown=phase_unknown, spec=spec, workers=workers, progress=True)


def cmd_offcpl_sweep(sweep, x0s, z0s, lam, n0, methods, spec, workers):
    """Wrapper script for the off-CPL sweep via the CLI."""
    _check_methods(methods)
    return offcpl_sweep(sweep.values(), x0s=x0s, z0s=z0s, lam=lam, n0=n0, methods=methods,
                        spec=spec, workers=workers, progress=True)


def cmd_approx_error(x0s, z0, R, lam, n0, spec, workers):
    """Wrapper script for the approximation-error table via the CLI."""
    return approx_error(x0s, z0=z0, R=R, lam=lam, n0=n0, spec=spec, workers=workers,
                        progress=True)


def cmd_ring_sweep(sweep, r, z0, R, lam, n0, spec, workers):
    """Wrapper script for the ring sweep via the CLI."""
    return ring_sweep(sweep.values(), r=r, z0=z0, R=R, lam=lam, n0=n0, spec=spec,
                      workers=workers, progress=True)


def cmd_phase_sweep(sweep, z0, lam, n0, methods, spec, workers):
    """Wrapper script for the phase-uncertainty sweep via the CLI."""
    bad = [m for m in methods if m not in ('closed', 'numeric', 'approx')]
    if bad:
        raise ScenarioError("phase-sweep methods are closed, numeric and approx; got %s"
                            % ', '.join(bad))
    return phase_sweep(sweep.values(), z0=z0, lam=lam, n0=n0, methods=methods, spec=spec,
                       workers=workers, progress=True)


def cmd_deploy(settings, lam, n0, spec, workers):
    """Wrapper script for the deployment comparisons via the CLI.

    stat 'cpl' sweeps R for the CPL terminal; 'mean' and 'cdf' draw a seeded
    terminal population and need --seed.
    """
    splits = settings['split']
    z0 = _one(settings, 'z0')
    W, H = settings['W'], settings['H']
    phase_unknown = settings['phase_unknown']
    stat = settings['stat']
    if stat == 'cpl':
        sweep = SweepSpec('R', settings['start'], settings['stop'], settings['num'],
                          settings['scale'])
        return deploy_sweep(sweep.values(), splits, W, H, z0, lam, n0, phase_unknown, spec,
                            workers, progress=True)

    if settings['seed'] is None:
        raise ScenarioError("Monte Carlo statistics need an explicit --seed")
    mc_config = McConfig(settings['n_terminals'], settings['xy_range'], z0, settings['seed'])
    print("Drawing %d terminals at z0=%g (seed %d)" % (mc_config.n_terminals, z0,
                                                       mc_config.seed), file=sys.stderr)
    if stat == 'mean':
        sweep = SweepSpec('R', settings['start'], settings['stop'], settings['num'],
                          settings['scale'])
        return deploy_mean(sweep.values(), mc_config, splits, W, H, lam, n0, phase_unknown,
                           spec, workers, progress=True)
    return deploy_cdf(settings['radius'], mc_config, splits, W, H, lam, n0, phase_unknown,
                      spec, workers, progress=True)


def cmd_validate(spec, checks, out):
    """Runs the validation suite and writes a JSON report; exits with 2 on any failure."""
    records = run_validation(spec, only=checks, progress=True)
    passed = all(r['passed'] for r in records)
    report = {'passed': passed, 'checks': records}
    if out in (None, '-'):
        json.dump(report, sys.stdout, indent=2)
        sys.stdout.write('\n')
    else:
        with open(out, 'w', encoding='utf8') as f:
            json.dump(report, f, indent=2)
    failed = [r['check'] for r in records if not r['passed']]
    if failed:
        print("Validation failed: %s" % ', '.join(failed), file=sys.stderr)
        sys.exit(2)
