"""Seeded synthetic data: the covariate-driven simulation design and the smoking/asbestos replica."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classes import MONOTONE_CLASSES, LatentClass
from .em import Dataset

ERROR_DISTS = ("normal", "t5", "uniform", "bernoulli", "gamma")

# Simulation defaults.  Rows follow the canonical monotone class order
# 0000, 0001, 0011, 0101, 0111, 1111 and columns (1, x1, x2).
SIM_ALPHA = np.array([
    [0.0, 0.0, 0.0],        # (z, m) = (0, 0), reference
    [-0.36, -0.37, -0.26],  # (0, 1)
    [-0.28, -0.19, 0.29],   # (1, 0)
    [-0.28, -0.19, 0.29],   # (1, 1)
])
SIM_THETA = np.array([
    [0.0, 0.0, 0.0],
    [-0.07, 0.36, 0.06],
    [0.03, -0.38, -0.37],
    [-0.19, 0.08, -0.27],
    [0.38, -0.03, 0.25],
    [-0.10, 0.27, 0.30],
])
SIM_MU = np.array([
    [-5.0, -1.77, -1.39],
    [-3.0, -1.46, 1.40],
    [-1.0, -1.72, -0.41],
    [1.0, 1.62, -1.29],
    [3.0, -1.08, 1.595],
    [5.0, 0.35, -0.06],
])
SIM_SIGMA = np.array([0.65, 1.38, 1.81, 1.17, 1.16, 1.39])


@dataclass
class SimConfig:
    n: int = 1000
    seed: int = 0
    error_dist: str = "normal"
    alpha: np.ndarray = field(default_factory=lambda: SIM_ALPHA.copy())
    theta: np.ndarray = field(default_factory=lambda: SIM_THETA.copy())
    mu: np.ndarray = field(default_factory=lambda: SIM_MU.copy())
    sigma: np.ndarray = field(default_factory=lambda: SIM_SIGMA.copy())

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}")
        if self.error_dist not in ERROR_DISTS:
            raise ValueError(f"error_dist must be one of {ERROR_DISTS}, got {self.error_dist!r}")
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        p = self.alpha.shape[1]
        if self.alpha.shape != (4, p) or self.theta.shape != (6, p) or self.mu.shape != (6, p):
            raise ValueError("alpha must be 4 x p, theta and mu 6 x p")
        if self.sigma.shape != (6,) or np.any(self.sigma <= 0):
            raise ValueError("sigma must hold six positive values")


def _rng(seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seq))


def standard_errors(dist: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """Mean-zero, unit-variance draws with the requested shape."""
    if dist == "normal":
        return rng.standard_normal(size)
    if dist == "t5":
        return rng.standard_t(5, size) / math.sqrt(5.0 / 3.0)
    if dist == "uniform":
        return rng.uniform(-1.0, 1.0, size) / math.sqrt(1.0 / 3.0)
    if dist == "bernoulli":
        return rng.choice(np.array([-1.0, 1.0]), size)
    if dist == "gamma":
        # shape 2, rate 0.5: mean 4, variance 8
        return (rng.gamma(2.0, 2.0, size) - 4.0) / math.sqrt(8.0)
    raise ValueError(f"unknown error distribution {dist!r}")


def _categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(len(probs))
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    return (u[:, None] > cdf).sum(axis=1)


def _softmax(eta: np.ndarray) -> np.ndarray:
    eta = eta - eta.max(axis=1, keepdims=True)
    e = np.exp(eta)
    return e / e.sum(axis=1, keepdims=True)


def generate_simulation(cfg: SimConfig) -> tuple[Dataset, list[LatentClass]]:
    """Draw covariates, exposures, classes and W; Y follows from class and exposure cell."""
    s_cov, s_exp, s_cls, s_err = (_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(4))
    n = cfg.n
    p = cfg.alpha.shape[1]
    cov = s_cov.standard_normal((n, p - 1))
    X = np.column_stack([np.ones(n), cov])
    cell = _categorical(_softmax(X @ cfg.alpha.T), s_exp)
    cls = _categorical(_softmax(X @ cfg.theta.T), s_cls)
    z, m = cell >> 1, cell & 1
    bits = np.array(MONOTONE_CLASSES)  # (6, 4)
    y = bits[cls, cell]
    eps = standard_errors(cfg.error_dist, n, s_err)
    w = np.sum(X * cfg.mu[cls], axis=1) + cfg.sigma[cls] * eps
    names = tuple(f"x{j}" for j in range(1, p))
    data = Dataset(z, m, y, w, X, names)
    return data, [MONOTONE_CLASSES[k] for k in cls]


def population_class_probs(cfg: SimConfig, n_mc: int = 1_000_000, seed: int = 12345) -> np.ndarray:
    """Marginal class probabilities E_X[softmax(theta X)] by Monte Carlo."""
    rng = _rng(np.random.SeedSequence(seed))
    p = cfg.theta.shape[1]
    X = np.column_stack([np.ones(n_mc), rng.standard_normal((n_mc, p - 1))])
    return _softmax(X @ cfg.theta.T).mean(axis=0)


# Replica of the smoking/asbestos study.  Each normal component is tied to one
# class, so every stratum mixes the components of its compatible classes.
REPLICA_COMPONENTS: dict[str, tuple[float, float]] = {
    "0000": (72.0, 4.0),
    "0001": (70.0, 3.0),
    "0011": (68.0, 6.5),
    "0101": (65.0, 6.0),
    "0111": (58.0, 2.0),
    "1111": (55.0, 5.0),
}

# (z, m, y) -> (stratum size, {class: weight})
REPLICA_STRATA: dict[tuple[int, int, int], tuple[int, dict[str, float]]] = {
    (0, 0, 1): (6, {"1111": 1.0}),
    (0, 0, 0): (5051, {"0000": 0.9561, "0001": 0.0320, "0011": 0.0064, "0101": 0.0035, "0111": 0.0020}),
    (0, 1, 1): (5, {"0101": 0.5289, "0111": 0.2934, "1111": 0.1777}),
    (0, 1, 0): (744, {"0000": 0.9614, "0001": 0.0322, "0011": 0.0064}),
    (1, 0, 1): (118, {"0011": 0.6700, "0111": 0.2055, "1111": 0.1245}),
    (1, 0, 0): (12265, {"0000": 0.9641, "0001": 0.0323, "0101": 0.0036}),
    (1, 1, 1): (141, {"0001": 0.7101, "0011": 0.1417, "0101": 0.0784, "0111": 0.0435, "1111": 0.0263}),
    (1, 1, 0): (2989, {"0000": 1.0}),
}


def generate_asbestos_replica(seed: int = 0, return_labels: bool = False):
    """Unit-level replica with the exact stratum sizes and mixture-distributed W.

    Each stratum draws from its own substream, so one stratum's draws do not
    depend on generation order.
    """
    streams = np.random.SeedSequence(seed).spawn(len(REPLICA_STRATA))
    zs, ms, ys, ws, labels = [], [], [], [], []
    for (key, (size, mix)), ss in zip(REPLICA_STRATA.items(), streams):
        rng = _rng(ss)
        names = list(mix)
        weights = np.array([mix[g] for g in names])
        comp = rng.choice(len(names), size=size, p=weights / weights.sum())
        mean = np.array([REPLICA_COMPONENTS[g][0] for g in names])[comp]
        sd = np.array([REPLICA_COMPONENTS[g][1] for g in names])[comp]
        ws.append(mean + sd * rng.standard_normal(size))
        z, m, y = key
        zs.append(np.full(size, z))
        ms.append(np.full(size, m))
        ys.append(np.full(size, y))
        labels.extend(LatentClass.parse(names[c]) for c in comp)
    data = Dataset(np.concatenate(zs), np.concatenate(ms), np.concatenate(ys), np.concatenate(ws),
                   np.ones((sum(len(a) for a in ws), 1)))
    return (data, labels) if return_labels else data
