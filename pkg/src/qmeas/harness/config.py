"""Strict TOML experiment configuration.

A config file holds optional top-level run keys (``master_seed``) and one
flat table per experiment kind, e.g.::

    master_seed = 7

    [teff-map]
    gamma_min = 0.1
    gamma_max = 10.0
    n_gamma = 41

Unknown tables or keys raise :class:`~qmeas.errors.ConfigError`. Missing
keys take the defaults listed in :data:`SCHEMAS`.
"""
import copy
import sys
from dataclasses import dataclass, field

from ..errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_SEED = 20240611

_SPIN = {"j": 0.5}
_FIELD = {"omega_x": 0.0, "omega_y": 0.0, "omega_z": 0.0}

SCHEMAS = {
    "single-shot": {**_SPIN, "r1": 0.1, "r2": 0.1, "sigma2": 1.0, "n_points": 256,
                    "direction": [1.0, 1.0, 0.0]},
    "deviation-map": {**_SPIN, "r_min": 0.05, "r_max": 0.5, "n_r": 10, "sigma2": 1.0,
                      "n_points": 256, "direction": [1.0, 1.0, 0.0]},
    "lindblad": {**_SPIN, **_FIELD, "omega_z": 1.0, "gamma1": 2.0, "gamma2": 2.0,
                 "t_final": 2.0, "dt_ode": 1e-3, "sample_dt": 1e-2,
                 "direction": [1.0, 0.0, 1.0]},
    "sme": {**_SPIN, **_FIELD, "omega_z": 1.0, "gamma1": 2.0, "gamma2": 2.0, "zeta": 1.0,
            "dt": 1e-3, "t_final": 2.0, "n_traj": 1000, "sample_every": 10,
            "mode": "ensemble", "scheme": "kraus", "direction": [1.0, 0.0, 1.0]},
    "feedback": {**_FIELD, "omega_z": 1.0, "Gamma_x": 0.5, "Gamma_y": 0.5, "kappa_f": 0.5,
                 "alphas": [], "dt": 1e-3, "t_final": 2.0, "n_traj": 1000,
                 "sample_every": 10, "mode": "ensemble", "scheme": "kraus",
                 "direction": [1.0, 0.0, 1.0]},
    "steady-state": {**_FIELD, "omega_z": 1.0, "Gamma_x": 2.0, "Gamma_y": 2.0,
                     "kappa_f": 1.0, "k_B": 1.0},
    "teff-map": {"gamma_min": 0.1, "gamma_max": 10.0, "n_gamma": 41, "kappa_f": 1.0,
                 "omega_z": 1.0, "k_B": 1.0},
    "xs-map": {"preset": "a", "omega_x": None, "omega_y": None, "kappa_f": 1.0,
               "gamma_min": 0.01, "gamma_max": 100.0, "n_gamma": 101},
    "reachable-boundary": {"omega_x": 0.5, "omega_y": -0.5, "kappa_f": 1.0,
                           "gamma_min": 0.01, "gamma_max": 100.0, "n_gamma": 200},
    "validate": {"criteria": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]},
}

EXPERIMENTS = tuple(SCHEMAS)
TOP_LEVEL_KEYS = ("master_seed",)

XS_PRESETS = {"a": (0.1, 0.1), "b": (0.5, 0.1), "c": (0.1, 0.5)}


@dataclass
class ExperimentConfig:
    """Resolved parameters for one experiment kind."""

    experiment: str
    params: dict = field(default_factory=dict)
    master_seed: int = DEFAULT_SEED

    def to_dict(self):
        return {"experiment": self.experiment, "master_seed": self.master_seed,
                "params": copy.deepcopy(self.params)}

    @classmethod
    def from_dict(cls, data):
        if set(data) != {"experiment", "master_seed", "params"}:
            raise ConfigError(f"malformed config echo: keys {sorted(data)}")
        return build_config(data["experiment"], data["params"], data["master_seed"])


def _coerce(kind, key, value, default):
    if value is None:
        return None
    if isinstance(default, bool) or isinstance(value, bool):
        if not isinstance(value, bool) or not isinstance(default, bool):
            raise ConfigError(f"[{kind}] {key}: expected boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if not isinstance(value, int):
            raise ConfigError(f"[{kind}] {key}: expected integer, got {value!r}")
        return value
    if isinstance(default, float) or default is None and isinstance(value, (int, float)):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"[{kind}] {key}: expected number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"[{kind}] {key}: expected string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"[{kind}] {key}: expected array, got {value!r}")
        return copy.deepcopy(value)
    raise ConfigError(f"[{kind}] {key}: unsupported value {value!r}")


def build_config(kind, params=None, master_seed=DEFAULT_SEED):
    """Validate ``params`` for ``kind`` and fill defaults."""
    if kind not in SCHEMAS:
        raise ConfigError(f"unknown experiment {kind!r}; choose from {', '.join(EXPERIMENTS)}")
    params = {} if params is None else params
    schema = SCHEMAS[kind]
    unknown = sorted(set(params) - set(schema))
    if unknown:
        raise ConfigError(f"[{kind}] unknown keys: {', '.join(unknown)}")
    resolved = {}
    for key, default in schema.items():
        value = params.get(key, default)
        resolved[key] = _coerce(kind, key, value, default)
    if not isinstance(master_seed, int) or isinstance(master_seed, bool) \
            or not 0 <= master_seed < 2**64:
        raise ConfigError(f"master_seed must be an unsigned 64-bit integer, got {master_seed!r}")
    return ExperimentConfig(kind, resolved, master_seed)


def parse_config(text, kind):
    """Parse TOML ``text`` and return the :class:`ExperimentConfig` for ``kind``."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in SCHEMAS:
                raise ConfigError(f"unknown table [{key}]")
            nested = [k for k, v in value.items() if isinstance(v, dict)]
            if nested:
                raise ConfigError(f"[{key}] must be flat; nested tables: {', '.join(nested)}")
        elif key not in TOP_LEVEL_KEYS:
            raise ConfigError(f"unknown top-level key {key!r}")
    seed = doc.get("master_seed", DEFAULT_SEED)
    return build_config(kind, doc.get(kind, {}), seed)


def load_config(path, kind):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, kind)
