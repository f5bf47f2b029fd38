import json
import os

from lis_crlb.src.geometry import ScenarioError, default_scenario

SCENARIO_KEYS = {'lambda', 'n0', 'terminal', 'panels', 'phase_unknown', 'phi'}
TERMINAL_KEYS = {'x', 'y', 'z'}
PANEL_KEYS = {'cx', 'cy', 'r'}


class ConfigError(ScenarioError):
    pass


def _check_keys(found, allowed, where):
    unknown = sorted(set(found) - allowed)
    if unknown:
        raise ConfigError("Unknown key(s) in %s: %s" % (where, ', '.join(unknown)))


def scenario_from_dict(param_dict, base=None):
    """Overlays a parsed config on top of `base` (the default scenario if None)."""
    if not isinstance(param_dict, dict):
        raise ConfigError("Scenario config must be a JSON object")
    _check_keys(param_dict, SCENARIO_KEYS, 'scenario')
    if 'terminal' in param_dict:
        if not isinstance(param_dict['terminal'], dict):
            raise ConfigError("'terminal' must be an object with keys x, y, z")
        _check_keys(param_dict['terminal'], TERMINAL_KEYS, 'terminal')
    if 'panels' in param_dict:
        panels = param_dict['panels']
        if not isinstance(panels, list):
            raise ConfigError("'panels' must be a list of {cx, cy, r} objects")
        for i, p in enumerate(panels):
            if not isinstance(p, dict) or 'r' not in p:
                raise ConfigError("panels[%d] needs at least the radius 'r'" % i)
            _check_keys(p, PANEL_KEYS, 'panels[%d]' % i)

    base = default_scenario() if base is None else base
    try:
        return base.override_from_dict(param_dict)
    except (TypeError, ValueError) as e:
        if isinstance(e, ScenarioError):
            raise
        raise ConfigError("Malformed scenario config: %s" % e) from e


def load_scenario(path, base=None):
    """Reads a JSON scenario file.

    Example:

        {"lambda": 0.1, "n0": 2,
         "terminal": {"x": 1, "y": 1, "z": 8},
         "panels": [{"cx": 0, "cy": 0, "r": 0.5}],
         "phase_unknown": false}
    """
    if not os.path.isfile(path):
        raise ConfigError("Scenario config not found: %s" % path)
    with open(path, 'r', encoding='utf8') as fp:
        try:
            param_dict = json.load(fp)
        except json.JSONDecodeError as e:
            raise ConfigError("%s is not valid JSON: %s" % (path, e)) from e
    return scenario_from_dict(param_dict, base=base)
