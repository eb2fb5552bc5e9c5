"""Python bindings for the agesel simulator.

Configs are plain dicts with the same keys as the JSON config files.
"""

import json as _json

from ._agesel import (  # noqa: F401
    ConfigError,
    Error,
    FormatError,
    IoError,
    NumericError,
    select_download,
)
from . import _agesel

__all__ = [
    "ConfigError",
    "Error",
    "FormatError",
    "IoError",
    "NumericError",
    "bound_report",
    "default_config",
    "normalize_config",
    "run_experiment",
    "select_download",
]


def default_config():
    return _json.loads(_agesel.default_config())


def normalize_config(config):
    """Fill defaults and validate keys. Raises ConfigError on bad input."""
    return _json.loads(_agesel.normalize_config(_json.dumps(config)))


def run_experiment(config, write_files=False, with_trace=False):
    """Run every (strategy, run) pair. Returns {"runs": [...], "comparison": {...}}."""
    return _json.loads(_agesel.run_experiment(_json.dumps(config), write_files, with_trace))


def bound_report(constants, c=None, J=0):
    """Lemma constants and bound for a dict of theory constants."""
    return _json.loads(_agesel.bound_report(_json.dumps(constants), 0.0 if c is None else float(c), int(J)))
