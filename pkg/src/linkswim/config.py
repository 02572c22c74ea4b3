"""Layered run configuration for the command-line runner.

Precedence, lowest to highest: built-in defaults, config file,
LINKSWIM_* environment variables, command-line flags. Every resolved
value is echoed into the run manifest so a job can be reproduced from
its output directory alone.
"""

from __future__ import annotations

import os

import yaml

ENV_PREFIX = "LINKSWIM_"


class ConfigError(Exception):
    """A config file or value the runner refuses; names the field."""

    def __init__(self, message: str, field: str = None, line: int = None):
        self.field = field
        self.line = line
        parts = []
        if field is not None:
            parts.append(f"field {field!r}")
        if line is not None:
            parts.append(f"line {line}")
        suffix = f" ({', '.join(parts)})" if parts else ""
        super().__init__(f"{message}{suffix}")


def _bool(field, value):
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in ("true", "false"):
        return value.lower() == "true"
    raise ConfigError(f"expected a boolean, got {value!r}", field=field)


def _int(field, value):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", field=field)
    return value


def _float(field, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=field)
    return float(value)


def _str(field, value):
    if not isinstance(value, str):
        raise ConfigError(f"expected a string, got {value!r}", field=field)
    return value


def _opt_str(field, value):
    return None if value is None else _str(field, value)


def _opt_float(field, value):
    return None if value is None else _float(field, value)


def _opt_int(field, value):
    return None if value is None else _int(field, value)


def _choice(*options):
    def cast(field, value):
        if value not in options:
            raise ConfigError(f"expected one of {options}, got {value!r}",
                              field=field)
        return value
    return cast


def _pair(field, value):
    try:
        x, y = value
        return [float(x), float(y)]
    except (TypeError, ValueError):
        raise ConfigError(f"expected an [x, y] pair, got {value!r}",
                          field=field)


def _points_or_star(field, value):
    if value == "star":
        return value
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError("expected 'star' or a nonempty list of [x, y] "
                          f"points, got {value!r}", field=field)
    return [_pair(field, p) for p in value]


def _int_list(field, value):
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"expected a nonempty list of integers, got "
                          f"{value!r}", field=field)
    return [_int(field, v) for v in value]


def _number_list(field, value):
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"expected a nonempty list of numbers, got "
                          f"{value!r}", field=field)
    return [_float(field, v) for v in value]


def _state5(field, value):
    try:
        vals = [float(v) for v in value]
    except (TypeError, ValueError):
        vals = None
    if vals is None or len(vals) != 5:
        raise ConfigError("expected [x1, y1, theta1, theta2, theta3], got "
                          f"{value!r}", field=field)
    return vals


# command -> {key: (default, caster)}
SCHEMAS = {
    "simulate-gait": {
        "gait": ("purcell_symmetric",
                 _choice("purcell_symmetric", "asymmetric_cw",
                         "asymmetric_ccw")),
        "cycles": (5, _int),
        "period": (8.0, _float),
        "dt": (0.1, _float),
        "sub_steps": (4, _int),
    },
    "train": {
        "mode": ("VFS", _choice("VFS", "EAS")),
        "b": (6.0, _float),
        "c": (3.0, _float),
        "episodes": (100_000, _int),
        "n_steps": (200, _int),
        "episodes_per_update": (40, _int),
        "discount": (0.99, _float),
        "clip_eps": (0.2, _float),
        "entropy_coef": (0.01, _float),
        "epochs": (10, _int),
        "minibatch": (256, _int),
        "lr": (3e-4, _float),
        "normalize_advantages": (True, _bool),
        "learn_std": (True, _bool),
        "checkpoint_every": (1000, _int),
        "theta_T": (0.0, _float),
        "dt": (0.1, _float),
        "sub_steps": (4, _int),
        "resume": (None, _opt_str),
    },
    "evaluate": {
        "checkpoint": (None, _opt_str),
        "trials": (100, _int),
        "n_steps": (1500, _int),
        "dt": (0.1, _float),
        "sub_steps": (4, _int),
    },
    "navigate": {
        "checkpoint": (None, _opt_str),
        "course": ("star", _points_or_star),
        "center": ([1.5, 0.5], _pair),
        "circumradius": (1.0, _float),
        "threshold": (0.001, _float),
        "budget_per_waypoint": (20_000, _int),
        "start": ([0.0, 0.0, 0.0, 0.0, 0.0], _state5),
        "dt": (0.1, _float),
        "sub_steps": (4, _int),
    },
    "pursue": {
        "checkpoint": (None, _opt_str),
        "target": ([1.5, 0.5], _pair),
        "angle_deg": (30.0, _float),
        "speed": (None, _opt_float),
        "speed_ratio": (None, _opt_float),
        "diffusivity": (5e-5, _float),
        "budget": (50_000, _int),
        "start": ([1.0, 0.0, 0.0, 0.0, 0.0], _state5),
        "dt": (0.1, _float),
        "sub_steps": (4, _int),
    },
    "sweep": {
        "parameter": ("c", _choice("c", "n_steps")),
        "values": ([0, 1, 2, 3], _number_list),
        "trials": (100, _int),
        "episodes": (None, _opt_int),
        "mode": ("EAS", _choice("VFS", "EAS")),
        "b": (6.0, _float),
        "n_steps": (200, _int),
        "eval_steps": (1500, _int),
        "checkpoint_every": (5000, _int),
        "normalize_advantages": (True, _bool),
        "learn_std": (True, _bool),
    },
}

COMMANDS = tuple(SCHEMAS)


def defaults(command: str) -> dict:
    return {key: default for key, (default, _) in SCHEMAS[command].items()}


def load_config_file(path: str) -> dict:
    """Parse a YAML mapping; parse errors carry the offending line."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        line = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise ConfigError(f"cannot parse {path}: {exc}", line=line)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be a mapping, got "
                          f"{type(doc).__name__}")
    return doc


def env_overrides(environ=None) -> dict:
    """LINKSWIM_FOO=value pairs as {'foo': parsed value}."""
    if environ is None:
        environ = os.environ
    out = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower()
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            value = raw
        if isinstance(value, str):
            # YAML leaves bare scientific notation like 1e-3 as a string
            try:
                value = float(value)
            except ValueError:
                pass
        out[name] = value
    return out


def resolve(command: str, file_cfg: dict = None, env: dict = None,
            flags: dict = None) -> dict:
    """Layer the sources and validate every value against the schema.

    Unknown keys in the config file are errors; unknown environment
    names are ignored (the environment is shared across commands).
    """
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}", field="command")
    schema = SCHEMAS[command]
    resolved = defaults(command)
    if file_cfg:
        for key, value in file_cfg.items():
            if key not in schema:
                raise ConfigError(f"unknown key for {command}", field=key)
            resolved[key] = value
    if env:
        for key, value in env.items():
            if key in schema:
                resolved[key] = value
    if flags:
        for key, value in flags.items():
            if value is None:
                continue
            if key not in schema:
                raise ConfigError(f"unknown key for {command}", field=key)
            resolved[key] = value
    for key, value in resolved.items():
        resolved[key] = schema[key][1](key, value)
    return resolved
