"""Nonparametric bootstrap over units with percentile intervals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .classes import ALL_EVIDENCE, Evidence
from .em import Dataset, FitConfig, FitFailedError, Restriction, fit_em

Estimator = Callable[[Dataset], dict[str, float]]


class ReplicateFailure(RuntimeError):
    pass


class BootstrapInstabilityError(RuntimeError):
    pass


@dataclass
class Estimate:
    point: float
    se: float
    ci_low: float
    ci_high: float
    mean: float

    def to_json(self) -> dict:
        return {"point": self.point, "se": self.se, "ci_low": self.ci_low, "ci_high": self.ci_high, "mean": self.mean}


@dataclass
class BootstrapResult:
    estimates: dict[str, Estimate]
    B: int
    n_failed: int
    replicates: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        return {"estimates": {k: e.to_json() for k, e in self.estimates.items()}, "B": self.B, "n_failed": self.n_failed}


# --------------------------------------------------------------------------
# pipelines


def _constant(_: Dataset) -> dict[str, float]:
    return {"constant": 1.0}


def _mean_w(data: Dataset) -> dict[str, float]:
    return {"mean_w": float(np.mean(data.w))}


def _fit_pipeline(attribute: bool, monotonic: bool, restriction: str, config: FitConfig) -> Estimator:
    from .attribution import DEFAULT_SHARES, model_posterior, responsibility_shares

    def run(data: Dataset) -> dict[str, float]:
        try:
            fit = fit_em(data, monotonic, restriction, config)
        except FitFailedError as exc:
            raise ReplicateFailure(str(exc)) from exc
        if not fit.converged:
            raise ReplicateFailure("EM did not converge")
        out = {f"pi_{g}": p for g, p in model_posterior(fit.params, Evidence.empty(), data).probs.items()}
        if not attribute:
            return out
        present = {(int(z), int(m), int(y)) for z, m, y in zip(data.z, data.m, data.y)}
        for ev in ALL_EVIDENCE:
            if ev.y != 1 or tuple(ev) not in present:
                continue
            post = model_posterior(fit.params, ev, data)
            out.update({f"post_{ev.z}{ev.m}{ev.y}_{g}": p for g, p in post.probs.items()})
            if ev == Evidence(1, 1, 1) and monotonic:
                out.update({f"share_{k}": v for k, v in responsibility_shares(post, DEFAULT_SHARES).items()})
        return out

    return run


PIPELINES = ("constant", "mean_w", "fit", "fit+attribute")


def make_pipeline(
    name: str,
    monotonic: bool = True,
    restriction: Restriction | str = Restriction.NONE,
    config: FitConfig | None = None,
) -> Estimator:
    if name == "constant":
        return _constant
    if name == "mean_w":
        return _mean_w
    if name in ("fit", "fit+attribute"):
        return _fit_pipeline(name == "fit+attribute", monotonic, Restriction(restriction).value, config or FitConfig())
    raise KeyError(f"unknown pipeline {name!r}; choose from {PIPELINES}")


# --------------------------------------------------------------------------


def _replicate(data: Dataset, estimator: Estimator, seq: np.random.SeedSequence) -> dict[str, float] | None:
    rng = np.random.Generator(np.random.Philox(seq))
    idx = rng.integers(0, data.n, size=data.n)
    try:
        return estimator(data.take(idx))
    except (ReplicateFailure, ArithmeticError, np.linalg.LinAlgError, ValueError):
        return None


def bootstrap(
    data: Dataset,
    estimator: Estimator | str,
    B: int = 500,
    seed: int = 0,
    level: float = 0.95,
    n_jobs: int = 1,
    max_fail_frac: float = 0.2,
) -> BootstrapResult:
    """Resample units with replacement ``B`` times and summarise each scalar estimand.

    Replicate ``b`` draws its indices from substream ``b`` of ``seed``, so the
    output does not depend on execution order or on ``n_jobs``.
    """
    if B < 2:
        raise ValueError("need at least two bootstrap replicates")
    if isinstance(estimator, str):
        estimator = make_pipeline(estimator)
    point = estimator(data)
    names = list(point)
    seqs = np.random.SeedSequence(seed).spawn(B)
    if n_jobs == 1:
        results = [_replicate(data, estimator, s) for s in seqs]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(_replicate)(data, estimator, s) for s in seqs)

    reps = np.full((B, len(names)), np.nan)
    n_failed = 0
    for b, res in enumerate(results):
        if res is None:
            n_failed += 1
            continue
        # an estimand absent from a replicate (e.g. an empty stratum) counts as missing there
        reps[b] = [res.get(k, np.nan) for k in names]
    if n_failed > max_fail_frac * B:
        raise BootstrapInstabilityError(f"{n_failed} of {B} replicates failed")

    alpha = 0.5 * (1.0 - level)
    estimates = {}
    for j, name in enumerate(names):
        col = reps[:, j]
        col = col[np.isfinite(col)]
        if len(col) < 2:
            estimates[name] = Estimate(point[name], math.nan, math.nan, math.nan, math.nan)
            continue
        lo, hi = np.quantile(col, [alpha, 1.0 - alpha])
        estimates[name] = Estimate(float(point[name]), float(np.std(col, ddof=1)), float(lo), float(hi), float(col.mean()))
    return BootstrapResult(estimates, B, n_failed, reps)
