"""Partial identification of the six monotone class probabilities.

Under monotonicity the four cell rates pin down every class except through a
single free parameter ``t = pi_0001``::

    A = d11 - d01,  B = d11 - d10,  C = d11 + d00 - d01 - d10
    pi_0011 = A - t,  pi_0101 = B - t,  pi_0111 = t - C
    pi_0000 = 1 - d11,  pi_1111 = d00

with ``t`` ranging over ``[max(C, 0), min(A, B)]``.  Every class probability
is affine in ``t``, so marginal intervals (prior or posterior) are attained at
the two endpoints.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classes import (
    ClassDistribution,
    Evidence,
    LatentClass,
    MONOTONE_CLASSES,
    compatible_classes,
)
from .rates import CellRates

FEAS_TOL = 1e-9

G0000, G0001, G0011, G0101, G0111, G1111 = MONOTONE_CLASSES


class InfeasibleRatesError(ValueError):
    """The observed rates cannot arise from any monotone class distribution."""

    def __init__(self, message: str, violations: list[str]):
        super().__init__(message + ": " + "; ".join(violations))
        self.violations = violations


class UndefinedPosteriorError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class MonotoneFamily:
    """The one-parameter family of monotone distributions matching a set of rates."""

    rates: CellRates
    A: float
    B: float
    C: float
    t_low: float
    t_high: float

    @property
    def degenerate(self) -> bool:
        return self.t_high - self.t_low <= FEAS_TOL

    def vector(self, t: float) -> np.ndarray:
        """Class probabilities in canonical monotone order for free parameter ``t``."""
        d00, d11 = self.rates[0, 0], self.rates[1, 1]
        v = np.array([1.0 - d11, t, self.A - t, self.B - t, t - self.C, d00])
        # endpoints can sit a rounding error below zero
        return np.where(np.abs(v) < FEAS_TOL, np.clip(v, 0.0, None), v)

    def distribution(self, t: float) -> ClassDistribution:
        v = np.clip(self.vector(t), 0.0, None)
        return ClassDistribution.from_array(MONOTONE_CLASSES, v / v.sum(), allowed=MONOTONE_CLASSES)


def monotone_family(d: CellRates) -> MonotoneFamily:
    d00, d01, d10, d11 = d.values()
    A = d11 - d01
    B = d11 - d10
    C = d11 + d00 - d01 - d10
    lo, hi = max(C, 0.0), min(A, B)
    violations = []
    if A < -FEAS_TOL:
        violations.append(f"delta11 - delta01 = {A:.3g} < 0")
    if B < -FEAS_TOL:
        violations.append(f"delta11 - delta10 = {B:.3g} < 0")
    if lo > hi + FEAS_TOL:
        violations.append(f"max(C, 0) = {lo:.3g} exceeds min(A, B) = {hi:.3g}")
    if violations:
        raise InfeasibleRatesError("rates incompatible with monotonicity", violations)
    if hi < lo:
        lo = hi = 0.5 * (lo + hi)
    return MonotoneFamily(d, A, B, C, lo, hi)


@dataclass(frozen=True)
class IntervalBounds:
    """Marginal ``[lower, upper]`` per class; point-identified classes have lower == upper."""

    intervals: dict[LatentClass, tuple[float, float]]
    family: MonotoneFamily | None = None

    def __getitem__(self, g: LatentClass | str) -> tuple[float, float]:
        if isinstance(g, str):
            g = LatentClass.parse(g)
        return self.intervals[g]

    def to_json(self) -> dict:
        out: dict = {str(g): {"lower": lo, "upper": hi} for g, (lo, hi) in self.intervals.items()}
        return out


def _intervals_from_endpoints(classes, lo_vec, hi_vec) -> dict[LatentClass, tuple[float, float]]:
    out = {}
    for g, a, b in zip(classes, lo_vec, hi_vec):
        lo, hi = (a, b) if a <= b else (b, a)
        out[g] = (max(float(lo), 0.0), min(float(hi), 1.0))
    return out


def class_bounds_mono(d: CellRates) -> IntervalBounds:
    fam = monotone_family(d)
    return IntervalBounds(
        _intervals_from_endpoints(MONOTONE_CLASSES, fam.vector(fam.t_low), fam.vector(fam.t_high)),
        fam,
    )


def conditional_vector(fam: MonotoneFamily, t: float, ev: Evidence) -> tuple[tuple[LatentClass, ...], np.ndarray]:
    """Posterior over the classes compatible with ``ev`` at free parameter ``t``."""
    classes = compatible_classes(ev, monotonic=True)
    denom = fam.rates.cell_probability(*ev)
    if denom <= 0.0:
        raise UndefinedPosteriorError(f"evidence {ev} has probability zero")
    full = dict(zip(MONOTONE_CLASSES, fam.vector(t)))
    return classes, np.array([full[g] for g in classes]) / denom


def posterior_bounds(d: CellRates, ev: Evidence) -> IntervalBounds:
    if ev.is_empty:
        return class_bounds_mono(d)
    fam = monotone_family(d)
    classes, lo = conditional_vector(fam, fam.t_low, ev)
    _, hi = conditional_vector(fam, fam.t_high, ev)
    return IntervalBounds(_intervals_from_endpoints(classes, lo, hi), fam)
