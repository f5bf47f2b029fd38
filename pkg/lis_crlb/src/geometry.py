import math
from dataclasses import dataclass, field, replace


class LisError(Exception):
    """Base class for every error raised by lis_crlb."""


class ScenarioError(LisError, ValueError):
    pass


@dataclass(frozen=True)
class Terminal:
    """Terminal position in meters; the surface lies in the z=0 plane."""
    x0: float
    y0: float
    z0: float

    def __post_init__(self):
        for name in ('x0', 'y0', 'z0'):
            if not math.isfinite(getattr(self, name)):
                raise ScenarioError("Terminal.%s must be finite" % name)
        if self.z0 <= 0:
            raise ScenarioError(
                "Terminal must lie in front of the surface (z0 > 0), got z0=%r" % self.z0)

    @property
    def r_perp(self):
        return math.hypot(self.x0, self.y0)

    def on_cpl(self):
        return self.x0 == 0 and self.y0 == 0

    def relative_to(self, panel):
        """Same terminal expressed in the panel-local frame."""
        return Terminal(self.x0 - panel.cx, self.y0 - panel.cy, self.z0)


@dataclass(frozen=True)
class Panel:
    """One disk-shaped surface centered at (cx, cy, 0)."""
    radius: float
    cx: float = 0.0
    cy: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ScenarioError("Panel radius must be positive, got R=%r" % self.radius)
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise ScenarioError("Panel center must be finite")


@dataclass(frozen=True)
class Scenario:
    terminal: Terminal
    panels: tuple
    lam: float
    n0: float = 2.0
    phase_unknown: bool = False
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'panels', tuple(self.panels))
        if not self.panels:
            raise ScenarioError("Scenario needs at least one panel")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ScenarioError("Wavelength must be positive, got lambda=%r" % self.lam)
        if not (math.isfinite(self.n0) and self.n0 > 0):
            raise ScenarioError("Noise spectral density must be positive, got n0=%r" % self.n0)

    @property
    def panel(self):
        return self.panels[0]

    @property
    def dim(self):
        return 4 if self.phase_unknown else 3

    def with_terminal(self, x0, y0, z0):
        return replace(self, terminal=Terminal(x0, y0, z0))

    def with_radius(self, radius):
        """Single-panel copy with the first panel resized."""
        return replace(self, panels=(replace(self.panel, radius=radius),))

    def override_from_dict(self, param_dict):
        """Returns a copy with the entries of a config dict applied on top.

        Parameters
        ----------
        param_dict : dict
            Keys among lambda, n0, phase_unknown, phi, terminal {x, y, z}
            and panels [{cx, cy, r}]; absent keys keep their current value.
        """
        changes = {}
        if 'lambda' in param_dict:
            changes['lam'] = float(param_dict['lambda'])
        if 'n0' in param_dict:
            changes['n0'] = float(param_dict['n0'])
        if 'phase_unknown' in param_dict:
            changes['phase_unknown'] = bool(param_dict['phase_unknown'])
        if 'phi' in param_dict:
            changes['phi'] = float(param_dict['phi'])
        if 'terminal' in param_dict:
            t = param_dict['terminal']
            changes['terminal'] = Terminal(float(t.get('x', self.terminal.x0)),
                                           float(t.get('y', self.terminal.y0)),
                                           float(t.get('z', self.terminal.z0)))
        if 'panels' in param_dict:
            changes['panels'] = tuple(Panel(float(p['r']),
                                            float(p.get('cx', 0.0)),
                                            float(p.get('cy', 0.0)))
                                      for p in param_dict['panels'])
        return replace(self, **changes)


@dataclass(frozen=True)
class DerivedGeometry:
    z1: float
    tau: float
    r_perp: float


@dataclass(frozen=True)
class MildConditions:
    holds: bool
    wavelength_ratio: float
    aperture_ratio: float
    eps: float = field(default=0.1)


def default_scenario():
    """Single unit disk at the origin, terminal on its axis at 4 m, lambda=0.1."""
    return Scenario(terminal=Terminal(0.0, 0.0, 4.0),
                    panels=(Panel(1.0),),
                    lam=0.1)


def derive(scenario, panel=None):
    """z1, tau and lateral offset of the terminal seen from one panel."""
    panel = scenario.panel if panel is None else panel
    t = scenario.terminal.relative_to(panel)
    r_perp = math.hypot(t.x0, t.y0)
    z1 = math.sqrt(t.x0 ** 2 + t.y0 ** 2 + t.z0 ** 2)
    tau = (panel.radius / t.z0) ** 2
    return DerivedGeometry(z1=z1, tau=tau, r_perp=r_perp)


def mild_conditions_hold(scenario, panel=None, eps=0.1):
    """Checks the two far-from-wavelength conditions behind the off-axis approximation.

    Each "much smaller than" is read as left side <= eps * right side. A
    terminal on the axis makes the aperture condition's bound infinite, so
    it is reported with ratio 0 and always holds.
    """
    panel = scenario.panel if panel is None else panel
    t = scenario.terminal.relative_to(panel)
    R = panel.radius
    r_perp = math.hypot(t.x0, t.y0)

    wavelength_bound = t.z0 ** 2 / math.sqrt(t.z0 ** 2 + r_perp ** 2 + R ** 2)
    wavelength_ratio = scenario.lam / wavelength_bound
    if r_perp == 0:
        aperture_ratio = 0.0
    else:
        aperture_ratio = 2 * R / (t.z0 ** 2 / r_perp + r_perp)

    holds = wavelength_ratio <= eps and aperture_ratio <= eps
    return MildConditions(holds=holds, wavelength_ratio=wavelength_ratio,
                          aperture_ratio=aperture_ratio, eps=eps)
