"""Maximum-entropy point estimate inside the monotone identification region."""
from __future__ import annotations

import math

import numpy as np

from .bounds import MonotoneFamily, conditional_vector, monotone_family
from .classes import ClassDistribution, Evidence
from .rates import CellRates


def entropy_along(fam: MonotoneFamily, t: float) -> float:
    v = fam.vector(t)
    return -math.fsum(p * math.log(p) for p in v if p > 0)


def maxent_t(fam: MonotoneFamily) -> float:
    """Entropy-maximising free parameter.

    Setting dH/dt = 0 gives (A - t)(B - t) = t (t - C), i.e. t = AB / (A + B - C).
    H is concave in t, so an out-of-range stationary point means the best
    endpoint wins.
    """
    if fam.degenerate:
        return fam.t_low
    denom = fam.A + fam.B - fam.C
    if denom > 0:
        t_star = fam.A * fam.B / denom
        if fam.t_low < t_star < fam.t_high:
            return t_star
    return max((fam.t_low, fam.t_high), key=lambda t: entropy_along(fam, t))


def maxent_mono(d: CellRates) -> ClassDistribution:
    fam = monotone_family(d)
    return fam.distribution(maxent_t(fam))


def maxent_posterior(d: CellRates, ev: Evidence) -> ClassDistribution:
    fam = monotone_family(d)
    t = maxent_t(fam)
    if ev.is_empty:
        return fam.distribution(t)
    classes, v = conditional_vector(fam, t, ev)
    v = np.clip(v, 0.0, None)
    return ClassDistribution.from_array(classes, v / v.sum())
