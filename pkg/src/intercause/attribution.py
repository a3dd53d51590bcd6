"""Posterior attribution probabilities, posterior-versus-W curves and cause shares."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .classes import (
    CELLS,
    ClassDistribution,
    Evidence,
    LatentClass,
    MONOTONE_CLASSES,
    compatible_classes,
    outcome_under,
)
from .em import Dataset, MixtureModelParams, class_prior_matrix, log_normal_pdf
from .rates import CellRates

RATE_CONSISTENCY_TOL = 1e-6


class ExtendedEvidence(NamedTuple):
    ev: Evidence
    w: float


class ZeroDensityError(ZeroDivisionError):
    pass


class RateMismatchWarning(UserWarning):
    pass


def implied_rates(pi: ClassDistribution) -> CellRates:
    """Cell rates implied by a class distribution: delta_zm = sum of classes with outcome 1 in (z, m)."""
    return CellRates({cell: math.fsum(p for g, p in pi.probs.items() if outcome_under(g, cell) == 1) for cell in CELLS})


def _compatible_support(pi: ClassDistribution, ev: Evidence) -> tuple[LatentClass, ...]:
    monotone = all(g.is_monotone() for g in pi.probs)
    return compatible_classes(ev, monotonic=monotone)


def posterior_given_evidence(pi: ClassDistribution, d: CellRates | None, ev: Evidence) -> ClassDistribution:
    """pr(G | Z=z, M=m, Y=y): the prior restricted to compatible classes, divided by the cell probability.

    With ``d=None`` the cell probability is implied by ``pi`` itself.  Supplied
    rates that disagree with ``pi`` trigger a warning and the posterior is
    normalised over the compatible classes.
    """
    if ev.is_empty:
        return pi
    classes = _compatible_support(pi, ev)
    mass = math.fsum(pi[g] for g in classes)
    if d is not None:
        denom = d.cell_probability(*ev)
        if denom <= 0.0:
            raise ZeroDivisionError(f"evidence {ev} has probability zero under the supplied rates")
        if abs(denom - mass) > RATE_CONSISTENCY_TOL:
            warnings.warn(
                f"class distribution implies pr(Y={ev.y} | cell {ev.z},{ev.m}) = {mass:.6g}, rates give {denom:.6g}",
                RateMismatchWarning,
            )
    if mass <= 0.0:
        raise ZeroDivisionError(f"evidence {ev} has probability zero under the class distribution")
    vals = np.array([pi[g] for g in classes]) / mass
    return ClassDistribution.from_array(classes, vals, normalize=True)


# --------------------------------------------------------------------------
# model-based posteriors


def _stratum_units(data: Dataset, ev: Evidence) -> np.ndarray:
    idx = np.flatnonzero((data.z == ev.z) & (data.m == ev.m) & (data.y == ev.y))
    if len(idx) == 0:
        raise ValueError(f"no units with evidence {ev}")
    return idx


def _unit_covariates(params: MixtureModelParams, ev: Evidence, data: Dataset | None) -> np.ndarray:
    if data is None:
        if params.p != 1:
            raise ValueError("covariate-dependent model needs the data to average over")
        return np.ones((1, 1))
    return data.X[_stratum_units(data, ev)]


def _unit_posteriors(params: MixtureModelParams, ev: Evidence, X: np.ndarray) -> tuple[list[int], np.ndarray]:
    """pr(G_i = g | O, X_i) for every unit row of X over the compatible classes."""
    classes = compatible_classes(ev, monotonic=params.monotonic)
    ks = [params.class_index(g) for g in classes]
    prior = class_prior_matrix(params.theta, X)[:, ks]
    tot = prior.sum(axis=1, keepdims=True)
    if np.any(tot <= 0):
        raise ZeroDivisionError(f"evidence {ev} has zero model probability")
    return ks, prior / tot


def model_posterior(params: MixtureModelParams, ev: Evidence, data: Dataset | None = None) -> ClassDistribution:
    """Population posterior pr(G | O) from a fitted model, averaged over units sharing the evidence."""
    if ev.is_empty:
        X = data.X if data is not None else np.ones((1, params.p))
        probs = class_prior_matrix(params.theta, X).mean(axis=0)
        return ClassDistribution.from_array(params.classes, probs, normalize=True)
    ks, post = _unit_posteriors(params, ev, _unit_covariates(params, ev, data))
    return ClassDistribution.from_array([params.classes[k] for k in ks], post.mean(axis=0), normalize=True)


def _extended_matrix(params: MixtureModelParams, ev: Evidence, w: np.ndarray, data: Dataset | None) -> tuple[list[int], np.ndarray]:
    """Posterior over compatible classes at each w; rows follow ``w``."""
    X = _unit_covariates(params, ev, data)
    ks, post = _unit_posteriors(params, ev, X)
    c = 2 * ev.z + ev.m
    means = X @ params.mu[c, ks].T  # (n_units, K')
    s2 = params.sigma2[c, ks]
    logf = log_normal_pdf(w[:, None, None], means[None], s2[None, None, :])  # (grid, units, K')
    # joint pr(W=w, G=g | O) averaged over units, in log space for stability
    lj = logf + np.log(np.where(post > 0, post, 1e-300))[None]
    top = lj.max(axis=(1, 2), keepdims=True)
    joint = np.exp(lj - top).mean(axis=1)
    tot = joint.sum(axis=1, keepdims=True)
    if np.any(tot <= 0) or not np.all(np.isfinite(top)):
        raise ZeroDensityError("total density is zero at some w")
    return ks, joint / tot


def posterior_given_extended(
    model: MixtureModelParams | Mapping[LatentClass, Callable[[float], float]],
    prior_post: ClassDistribution | None,
    ext: ExtendedEvidence,
    data: Dataset | None = None,
) -> ClassDistribution:
    """pr(G | O, W=w).

    ``model`` is either fitted parameters or a mapping from class to a density
    function of w.  With a mapping, ``prior_post`` supplies pr(G | O) and the
    update is a plain Bayes step.  With fitted parameters the per-unit
    posteriors are averaged over units sharing the evidence (``prior_post``
    is then unused).
    """
    ev, w = ext
    if ev.is_empty:
        raise ValueError("extended evidence needs a fully specified (z, m, y)")
    if not math.isfinite(w):
        raise ValueError("w must be finite")
    if isinstance(model, MixtureModelParams):
        ks, mat = _extended_matrix(model, ev, np.array([float(w)]), data)
        return ClassDistribution.from_array([model.classes[k] for k in ks], mat[0], normalize=True)
    if prior_post is None:
        raise ValueError("density mapping needs a prior posterior")
    classes = [g for g in prior_post.classes() if prior_post[g] > 0]
    missing = [str(g) for g in classes if g not in model]
    if missing:
        raise KeyError(f"no density for classes {missing}")
    vals = np.array([model[g](w) * prior_post[g] for g in classes])
    tot = vals.sum()
    if not tot > 0:
        raise ZeroDensityError(f"total density is zero at w={w}")
    return ClassDistribution.from_array(classes, vals / tot, normalize=True)


class Crossing(NamedTuple):
    w: float
    before: LatentClass
    after: LatentClass


@dataclass
class PosteriorCurve:
    ev: Evidence
    grid: np.ndarray
    probs: dict[LatentClass, np.ndarray]
    crossings: list[Crossing] = field(default_factory=list)

    def dominant(self) -> list[LatentClass]:
        classes = list(self.probs)
        mat = np.column_stack([self.probs[g] for g in classes])
        return [classes[k] for k in mat.argmax(axis=1)]

    def rows(self):
        for i, w in enumerate(self.grid):
            for g, p in self.probs.items():
                yield float(w), str(g), float(p[i])

    def crossings_json(self) -> dict:
        return {
            "evidence": str(self.ev),
            "crossings": [{"w": c.w, "from": str(c.before), "to": str(c.after)} for c in self.crossings],
        }


def posterior_curve(
    params: MixtureModelParams,
    ev: Evidence,
    w_grid: Sequence[float],
    data: Dataset | None = None,
    bisect_steps: int = 40,
) -> PosteriorCurve:
    """Posterior over compatible classes along a W grid, with dominant-class switch points."""
    grid = np.asarray(w_grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("grid must be a nonempty 1-d sequence")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if ev.is_empty:
        raise ValueError("posterior curves need a fully specified (z, m, y)")
    ks, mat = _extended_matrix(params, ev, grid, data)
    classes = [params.classes[k] for k in ks]
    top = mat.argmax(axis=1)
    crossings = []
    for i in np.flatnonzero(top[1:] != top[:-1]):
        a, b = top[i], top[i + 1]
        lo, hi = grid[i], grid[i + 1]
        for _ in range(bisect_steps):
            mid = 0.5 * (lo + hi)
            _, pm = _extended_matrix(params, ev, np.array([mid]), data)
            if pm[0, a] >= pm[0, b]:
                lo = mid
            else:
                hi = mid
        crossings.append(Crossing(0.5 * (lo + hi), classes[a], classes[b]))
    return PosteriorCurve(ev, grid, {g: mat[:, j] for j, g in enumerate(classes)}, crossings)


# --------------------------------------------------------------------------
# responsibility shares


@dataclass(frozen=True)
class AttributionMatrix:
    """Fraction of each class's outcome credited to each named cause; the remainder goes to "other"."""

    shares: Mapping[LatentClass, Mapping[str, float]]

    def __post_init__(self) -> None:
        fixed = {}
        for g, row in self.shares.items():
            g = LatentClass.parse(g) if isinstance(g, str) else LatentClass(*g)
            row = {str(k): float(v) for k, v in row.items()}
            if "other" in row:
                raise ValueError("'other' is reserved for the residual")
            if any(not 0.0 <= v <= 1.0 for v in row.values()):
                raise ValueError(f"shares for class {g} must lie in [0, 1]")
            if math.fsum(row.values()) > 1.0 + 1e-12:
                raise ValueError(f"shares for class {g} exceed 1")
            fixed[g] = row
        object.__setattr__(self, "shares", fixed)

    @property
    def causes(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for row in self.shares.values():
            seen.update(dict.fromkeys(row))
        return tuple(seen)

    def to_json(self) -> dict:
        return {str(g): dict(row) for g, row in self.shares.items()}

    @classmethod
    def from_json(cls, data: Mapping[str, Mapping[str, float]]) -> "AttributionMatrix":
        return cls({LatentClass.parse(k): v for k, v in data.items()})


# z is smoking, m is asbestos.  Single-cause classes go wholly to their cause,
# synergistic and parallel classes split evenly, immune and doomed get nothing.
DEFAULT_SHARES = AttributionMatrix({
    MONOTONE_CLASSES[0]: {"smoking": 0.0, "asbestos": 0.0},
    MONOTONE_CLASSES[1]: {"smoking": 0.5, "asbestos": 0.5},
    MONOTONE_CLASSES[2]: {"smoking": 1.0, "asbestos": 0.0},
    MONOTONE_CLASSES[3]: {"smoking": 0.0, "asbestos": 1.0},
    MONOTONE_CLASSES[4]: {"smoking": 0.5, "asbestos": 0.5},
    MONOTONE_CLASSES[5]: {"smoking": 0.0, "asbestos": 0.0},
})


def responsibility_shares(post: ClassDistribution, attr: AttributionMatrix = DEFAULT_SHARES) -> dict[str, float]:
    missing = [str(g) for g, p in post.probs.items() if p > 0 and g not in attr.shares]
    if missing:
        raise KeyError(f"attribution matrix has no row for classes {missing}")
    out = {cause: 0.0 for cause in attr.causes}
    for g, p in post.probs.items():
        for cause, share in attr.shares.get(g, {}).items():
            out[cause] += p * share
    out["other"] = 1.0 - math.fsum(out.values())
    return out
