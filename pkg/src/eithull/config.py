"""Flat key = value configuration with sections (INI syntax).

Every option has a documented default below; a config file only lists the
values it overrides.  Unknown sections or keys are rejected so that typos
fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import configparser
import math
from io import StringIO


class ConfigError(ValueError):
    """Bad configuration file or option value."""


DEFAULTS: dict[str, dict[str, str]] = {
    "dataset": {
        "count": "2000",              # records to generate
        "family": "train",            # train (ellipses) | test (3 shape kinds)
        "refinement": "6",            # disk-mesh refinement level (level 7 = 65536 triangles)
        "order": "32",                # trigonometric truncation order of the ND/DN matrices
        "noise": repr(10.0**-4.5),    # per-entry Gaussian std added to ND matrices
        "workers": "1",               # parallel workers for record generation
    },
    "train": {
        "epochs": "200",
        "learning_rate": "0.01",
        "momentum": "0.9",
        "decay_factor": "0.2",        # learning rate multiplier ...
        "decay_every": "5",           # ... applied every this many epochs
        "batch_size": "128",
        "val_fraction": "0.2",        # 80/20 split, fixed once up front
        "dtype": "float32",           # training compute precision
    },
    "cem": {
        "electrodes": "16",
        "coverage": "0.5",            # electrode arc as a fraction of its boundary cell
        "contact_impedance": "0.01",
        "amplitude": "1.0",           # current amplitude for adjacent injections
        "refinement": "6",
        "include_reference": "true",  # also simulate the homogeneous tank
        "phantom": "ellipse 0.0 0.0 0.35 0.35 0.0 2.0",
    },
    "reconstruct": {
        "order": "32",                # truncation order for DN-matrix inputs
        "analytic_reference": "false",# allow the closed-form homogeneous fallback
    },
}


def load_config(path=None) -> dict[str, dict[str, str]]:
    """Defaults merged with the optional config file at ``path``."""
    merged = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    if path is None:
        return merged
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file: {exc}") from exc
    for section in parser.sections():
        if section not in merged:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in parser.items(section):
            if key not in merged[section]:
                raise ConfigError(f"unknown option {key!r} in section [{section}]")
            merged[section][key] = value
    return merged


def get_int(cfg, section, key) -> int:
    try:
        return int(cfg[section][key])
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} must be an integer") from exc


def get_float(cfg, section, key) -> float:
    try:
        value = float(cfg[section][key])
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} must be a number") from exc
    if not math.isfinite(value):
        raise ConfigError(f"[{section}] {key} must be finite")
    return value


def get_bool(cfg, section, key) -> bool:
    value = cfg[section][key].strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section}] {key} must be a boolean")


def config_text(cfg, extra: dict[str, str] | None = None) -> str:
    """Canonical echo of an effective configuration (deterministic order)."""
    out = StringIO()
    if extra:
        for key in sorted(extra):
            out.write(f"{key} = {extra[key]}\n")
    for section in sorted(cfg):
        out.write(f"[{section}]\n")
        for key in sorted(cfg[section]):
            out.write(f"{key} = {cfg[section][key]}\n")
    return out.getvalue()


def defaults_help() -> str:
    """Human-readable listing of every option and its default."""
    lines = []
    for section in sorted(DEFAULTS):
        lines.append(f"[{section}]")
        for key in sorted(DEFAULTS[section]):
            lines.append(f"  {key} = {DEFAULTS[section][key]}")
    return "\n".join(lines)
