"""
Toolkit Settings
Loads defaults from settings.json (merged over built-in defaults).

Only the default prime bit length can be overridden from the environment
(PSA_DEFAULT_BITS); everything else comes from the file or from CLI flags.
"""

import copy
import json
import logging
import os

logger = logging.getLogger(__name__)

SETTINGS_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'settings.json')
BITS_ENV_VAR = 'PSA_DEFAULT_BITS'

DEFAULT_SETTINGS = {
    # Prime size for keygen / bench when no --bits flag is given
    "default_bits": 2048,
    # Use the well-known MODP safe primes when the bit length matches one
    "prefer_standard_primes": True,

    # Plaintext margin: per-user noise must stay within this many std devs
    "margin_sigmas": 10,

    # Worker threads for simulator runs (results do not depend on this)
    "workers": 1,

    # Mechanism comparison sweep (fixed eps=0.1, S=1, beta=0.001)
    "figure1": {
        "epsilon": 0.1,
        "sensitivity": 1,
        "beta": 0.001,
        "users": 1000,
        "runs": 100,
        "timesteps": 1,
        "data_value": 1,
        "delta_grid": [0.1, 0.01, 0.001, 0.0001],
        "fixed_delta": 0.001,
        "gamma_grid": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
    },

    # Timing tables
    "bench": {
        "iterations": 20,
        "users": 1000,
        "m_grid": [1, 10, 100, 1000, 10000],
        "enc_bits": [1024, 2048],
    },
}


def _merge(defaults, overrides):
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_settings(path=None, environ=None):
    """
    Load settings from file, merged over DEFAULT_SETTINGS.

    Args:
        path: settings file (defaults to settings.json next to this module)
        environ: mapping used for the PSA_DEFAULT_BITS override (defaults to os.environ)

    Returns:
        dict of settings
    """
    path = path or SETTINGS_FILE
    environ = os.environ if environ is None else environ
    settings = copy.deepcopy(DEFAULT_SETTINGS)

    try:
        if os.path.exists(path):
            with open(path, 'r') as f:
                settings = _merge(DEFAULT_SETTINGS, json.load(f))
    except (OSError, ValueError) as e:
        logger.warning(f"⚠️  Error loading settings from {path}: {e}")

    raw_bits = environ.get(BITS_ENV_VAR)
    if raw_bits:
        try:
            bits = int(raw_bits)
            if bits < 3:
                raise ValueError("bit length must be at least 3")
            settings['default_bits'] = bits
        except ValueError as e:
            logger.warning(f"⚠️  Ignoring {BITS_ENV_VAR}={raw_bits!r}: {e}")

    return settings

