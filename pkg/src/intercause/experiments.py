"""End-to-end studies shared by the scripts and the acceptance suite."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .attribution import PosteriorCurve, model_posterior, posterior_curve
from .classes import ALL_EVIDENCE, MONOTONE_CLASSES, ClassDistribution, Evidence
from .datagen import SimConfig, generate_asbestos_replica, generate_simulation, population_class_probs
from .em import Dataset, FitConfig, FitFailedError, FitResult, Restriction, class_prior_matrix, fit_em


@dataclass
class ReplicaStudy:
    data: Dataset
    monotone: FitResult
    general: FitResult | None
    prior: ClassDistribution
    posteriors: dict[Evidence, ClassDistribution]
    curves: dict[Evidence, PosteriorCurve]
    seconds: float


def replica_study(
    seed: int = 0,
    n_starts: int = 10,
    general: bool = True,
    general_restriction: Restriction | str = Restriction.SHARED_MEANS,
    grid: np.ndarray | None = None,
) -> ReplicaStudy:
    """Fit the monotone model (and optionally the 16-class model) to the smoking/asbestos replica."""
    t0 = time.perf_counter()
    data = generate_asbestos_replica(seed)
    cfg = FitConfig(n_starts=n_starts, seed=seed)
    mono = fit_em(data, True, Restriction.NONE, cfg)
    gen = fit_em(data, False, general_restriction, cfg) if general else None
    grid = np.linspace(40.0, 100.0, 601) if grid is None else grid
    posts, curves = {}, {}
    for ev in ALL_EVIDENCE:
        posts[ev] = model_posterior(mono.params, ev, data)
        if ev.y == 1:
            curves[ev] = posterior_curve(mono.params, ev, grid, data)
    prior = model_posterior(mono.params, Evidence.empty(), data)
    return ReplicaStudy(data, mono, gen, prior, posts, curves, time.perf_counter() - t0)


@dataclass
class SimulationSummary:
    truth: np.ndarray
    estimates: np.ndarray  # (successful reps, 6)
    n_failed: int
    seconds: float
    classes: tuple = field(default=MONOTONE_CLASSES)

    @property
    def bias(self) -> np.ndarray:
        return self.estimates.mean(axis=0) - self.truth

    @property
    def se(self) -> np.ndarray:
        return self.estimates.std(axis=0, ddof=1)

    def table(self) -> list[tuple[str, float, float]]:
        """(class, bias x 100, se x 100) rows."""
        return [(str(g), 100 * b, 100 * s) for g, b, s in zip(self.classes, self.bias, self.se)]


def _simulation_rep(
    rep: int, n: int, error_dist: str, seed: int, fit_cfg: FitConfig, restriction: Restriction
) -> np.ndarray | None:
    data, _ = generate_simulation(SimConfig(n=n, seed=seed + rep, error_dist=error_dist))
    cfg = FitConfig(**{**fit_cfg.__dict__, "seed": seed + rep})
    try:
        fit = fit_em(data, True, restriction, cfg)
    except FitFailedError:
        return None
    return class_prior_matrix(fit.params.theta, data.X).mean(axis=0)


def simulation_study(
    reps: int = 100,
    n: int = 1000,
    error_dist: str = "normal",
    seed: int = 0,
    fit_cfg: FitConfig | None = None,
    n_jobs: int = 1,
    restriction: Restriction | str = Restriction.NONE,
) -> SimulationSummary:
    """Repeatedly simulate, fit the monotone model and compare average class priors with the truth."""
    fit_cfg = fit_cfg or FitConfig()
    restriction = Restriction(restriction)
    t0 = time.perf_counter()
    truth = population_class_probs(SimConfig(n=n, error_dist=error_dist))
    if n_jobs == 1:
        out = [_simulation_rep(r, n, error_dist, seed, fit_cfg, restriction) for r in range(reps)]
    else:
        from joblib import Parallel, delayed

        out = Parallel(n_jobs=n_jobs)(delayed(_simulation_rep)(r, n, error_dist, seed, fit_cfg, restriction) for r in range(reps))
    ok = [e for e in out if e is not None]
    return SimulationSummary(truth, np.array(ok), reps - len(ok), time.perf_counter() - t0)
