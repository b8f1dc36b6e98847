"""
Library tunables.

Projects override any of these through a ``MESOLAB`` dict in their Django
settings::

    MESOLAB = {
        "SPACING_HORIZON": 10**5,
        "HANKEL_BCONST": 0.5,
    }

The numerical modules also run without a configured Django project, in which
case the defaults below apply.
"""

from django.conf import settings

DEFAULTS = {
    # jacobi
    "SPACING_START": 100,
    "SPACING_HORIZON": 10**6,
    "SPACING_M": 0.5,
    # resolvent
    "PHI_DEGENERACY": 1e-12,
    "RESONANCE_THRESHOLD": 1e-10,
    "RESIDUAL_TOLERANCE": 1e-10,
    "CONDITION_LIMIT": 1e14,
    "DECAY_MARGIN": 20,
    "MIN_FIT_PAIRS": 50,
    # cumulants
    "TRUNCATION_FACTOR": 20,
    "TRUNCATION_FLOOR": 200,
    "TRUNCATION_MAX_DOUBLINGS": 3,
    "MAX_CUMULANT_ORDER": 6,
    "TAIL_TOLERANCE": 1e-8,
    "UNCONVERGED_THRESHOLD": 1e-6,
    "FREDHOLM_RADIUS": 0.1,
    "FREDHOLM_NODES": 64,
    "DIAGONAL_BAND": 1e-6,
    # hankel
    "HANKEL_BCONST": 1.0,
    "HANKEL_TAIL": 1e-14,
    # sampler
    "ENVELOPE_CELLS": 2048,
    "ENVELOPE_POINTS": 8,
    "ENVELOPE_HEADROOM": 1.2,
    "JACKKNIFE_GROUPS": 100,
    "OVERFLOW_LIMIT": 1e300,
    # experiments
    "CUMULANT_FLOOR": 1e-10,
    "SITE_PROXIMITY": 1.0,
    "CHAIN_CONSTANT_SPREAD": 10,
}


def get(name):
    if name not in DEFAULTS:
        raise KeyError("Unknown mesolab setting `{0}`".format(name))
    overrides = getattr(settings, "MESOLAB", None) if settings.configured else None
    if overrides and name in overrides:
        return overrides[name]
    return DEFAULTS[name]
