"""EM estimation of the latent-class mixture model.

The class prior pr(G | X) is multinomial logistic with the immune class 0000
as reference, and the secondary outcome W given (Z, M, G, X) is normal with a
linear mean.  G is treated as missing data: the E-step computes, for every
unit, the posterior over the classes compatible with its observed (z, m, y);
the M-step refits the prior by weighted multinomial logistic regression and
each (cell, class) normal regression by weighted least squares.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .classes import (
    CELLS,
    ClassDistribution,
    ExposureCell,
    LatentClass,
    compatibility_matrix,
    enumerate_classes,
)

LOG_2PI = math.log(2.0 * math.pi)
ASCENT_SLACK = 1e-8
# components whose total responsibility falls below this keep their previous values
MIN_COMPONENT_WEIGHT = 1e-10


class Restriction(str, Enum):
    NONE = "none"
    SHARED_MEANS = "shared-means"
    SHARED_VARIANCES = "shared-variances"


class ConvergenceWarning(UserWarning):
    pass


class UnidentifiableComponentError(np.linalg.LinAlgError):
    pass


class FitFailedError(RuntimeError):
    pass


class SchemaError(ValueError):
    pass


# --------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class UnitRecord:
    z: int
    m: int
    y: int
    w: float
    x: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar unit-level data.  ``X`` carries the intercept in column 0."""

    z: np.ndarray
    m: np.ndarray
    y: np.ndarray
    w: np.ndarray
    X: np.ndarray
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        z = np.asarray(self.z, dtype=np.int64)
        m = np.asarray(self.m, dtype=np.int64)
        y = np.asarray(self.y, dtype=np.int64)
        w = np.asarray(self.w, dtype=float)
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        n = len(w)
        if n == 0:
            raise ValueError("dataset is empty")
        if not (len(z) == len(m) == len(y) == n and X.shape[0] == n):
            raise ValueError("column lengths differ")
        for name, col in (("z", z), ("m", m), ("y", y)):
            if np.any((col != 0) & (col != 1)):
                raise ValueError(f"column {name} must be binary")
        if not np.all(np.isfinite(w)):
            raise ValueError("w must be finite")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates must be finite")
        for name, val in (("z", z), ("m", m), ("y", y), ("w", w), ("X", X)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        if not self.covariate_names:
            object.__setattr__(self, "covariate_names", tuple(f"x{j}" for j in range(1, X.shape[1])))

    @property
    def n(self) -> int:
        return len(self.w)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def cell(self) -> np.ndarray:
        return 2 * self.z + self.m

    @classmethod
    def from_arrays(cls, z, m, y, w, covariates=None, names: Sequence[str] = ()) -> "Dataset":
        w = np.asarray(w, dtype=float)
        if covariates is None:
            X = np.ones((len(w), 1))
        else:
            cov = np.asarray(covariates, dtype=float).reshape(len(w), -1)
            X = np.column_stack([np.ones(len(w)), cov])
        return cls(z, m, y, w, X, tuple(names))

    @classmethod
    def from_records(cls, records: Iterable[UnitRecord]) -> "Dataset":
        recs = list(records)
        if not recs:
            raise ValueError("dataset is empty")
        dims = {len(r.x) for r in recs}
        if len(dims) != 1:
            raise ValueError("covariate vectors differ in dimension")
        return cls(
            [r.z for r in recs], [r.m for r in recs], [r.y for r in recs],
            [r.w for r in recs], np.array([r.x for r in recs], dtype=float),
        )

    def records(self) -> list[UnitRecord]:
        return [
            UnitRecord(int(self.z[i]), int(self.m[i]), int(self.y[i]), float(self.w[i]), tuple(self.X[i].tolist()))
            for i in range(self.n)
        ]

    def take(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.z[idx], self.m[idx], self.y[idx], self.w[idx], self.X[idx], self.covariate_names)

    def stratum_counts(self) -> dict[tuple[int, int, int], int]:
        key = 4 * self.z + 2 * self.m + self.y
        counts = np.bincount(key, minlength=8)
        return {(k >> 2, (k >> 1) & 1, k & 1): int(counts[k]) for k in range(8)}


def read_dataset_csv(path: str | Path) -> tuple[Dataset, np.ndarray | None]:
    """Read ``z,m,y,w,x1,...,xk`` (optional trailing ``class`` column for ground truth)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty data file") from None
        rows = [r for r in reader if r]
    missing = [c for c in ("z", "m", "y", "w") if c not in header]
    if missing:
        raise SchemaError(f"data file missing required columns: {missing}")
    cov_names = [h for h in header if h not in ("z", "m", "y", "w", "class")]
    col = {h: j for j, h in enumerate(header)}
    try:
        arr = {h: np.array([float(r[col[h]]) for r in rows]) for h in ("z", "m", "y", "w", *cov_names)}
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"malformed data row: {exc}") from exc
    cov = np.column_stack([arr[h] for h in cov_names]) if cov_names else None
    labels = None
    if "class" in col:
        labels = np.array([LatentClass.parse(r[col["class"]]).index for r in rows])
    ds = Dataset.from_arrays(
        arr["z"].astype(int), arr["m"].astype(int), arr["y"].astype(int), arr["w"], cov, cov_names
    )
    return ds, labels


def write_dataset_csv(data: Dataset, path, labels: Sequence[LatentClass] | None = None) -> None:
    """Write to ``path``, which may also be an open text stream."""
    if hasattr(path, "write"):
        _write_rows(data, path, labels)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(data, fh, labels)


def _write_rows(data: Dataset, fh, labels) -> None:
    out = csv.writer(fh, lineterminator="\n")
    out.writerow(["z", "m", "y", "w", *data.covariate_names] + (["class"] if labels is not None else []))
    for i in range(data.n):
        row = [int(data.z[i]), int(data.m[i]), int(data.y[i]), repr(float(data.w[i]))]
        row += [repr(float(v)) for v in data.X[i, 1:]]
        if labels is not None:
            row.append(str(labels[i]))
        out.writerow(row)


class _Design:
    """Per-dataset index structures reused across EM iterations.

    Units sharing (z, m, y) share their compatible class set, so the E-step
    works stratum by stratum on dense blocks.
    """

    def __init__(self, data: Dataset, classes: Sequence[LatentClass]):
        self.data = data
        self.classes = tuple(classes)
        compat = compatibility_matrix(self.classes)
        self.compat = compat[data.z, data.m, data.y]  # (n, K)
        cell = data.cell
        self.cell_of = cell
        self.cell_idx = [np.flatnonzero(cell == c) for c in range(4)]
        self.X_cell = [data.X[idx] for idx in self.cell_idx]
        self.w_cell = [data.w[idx] for idx in self.cell_idx]
        # a (cell, class) component is instantiated when some unit in the cell can belong to it
        self.active = np.zeros((4, len(self.classes)), dtype=bool)
        self.strata = []  # (cell, unit indices, compatible class indices)
        key = 4 * data.z + 2 * data.m + data.y
        for s in range(8):
            idx = np.flatnonzero(key == s)
            if len(idx) == 0:
                continue
            z, m, y = s >> 2, (s >> 1) & 1, s & 1
            ks = np.flatnonzero(compat[z, m, y])
            self.active[2 * z + m, ks] = True
            self.strata.append((2 * z + m, idx, ks, data.X[idx], data.w[idx]))
        self.intercept_only = data.p == 1 and bool(np.all(data.X[:, 0] == 1.0))


def _lse_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))[:, 0]


# --------------------------------------------------------------------------
# parameters


@dataclass
class MixtureModelParams:
    """Class-prior coefficients and per-(cell, class) normal regressions.

    ``theta[k]`` are the logistic coefficients of ``classes[k]`` (row 0 is the
    reference and stays zero); ``mu[c, k]`` and ``sigma2[c, k]`` belong to
    exposure cell ``c = 2z + m``.  Components with ``active[c, k]`` False
    never enter the likelihood.
    """

    classes: tuple[LatentClass, ...]
    theta: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    active: np.ndarray
    restriction: Restriction = Restriction.NONE

    @property
    def monotonic(self) -> bool:
        return len(self.classes) == 6

    @property
    def p(self) -> int:
        return self.theta.shape[1]

    def copy(self) -> "MixtureModelParams":
        return MixtureModelParams(self.classes, self.theta.copy(), self.mu.copy(), self.sigma2.copy(),
                                  self.active.copy(), self.restriction)

    def class_index(self, g: LatentClass) -> int:
        return self.classes.index(g)

    def to_json(self) -> dict:
        beta = {}
        for c, cell in enumerate(CELLS):
            for k, g in enumerate(self.classes):
                if self.active[c, k]:
                    beta[f"{cell.z},{cell.m},{g}"] = {"mu": self.mu[c, k].tolist(), "sigma2": float(self.sigma2[c, k])}
        return {
            "classes": [str(g) for g in self.classes],
            "theta": {str(g): self.theta[k].tolist() for k, g in enumerate(self.classes)},
            "beta": beta,
            "restriction": self.restriction.value,
        }

    @classmethod
    def from_json(cls, data: dict) -> "MixtureModelParams":
        classes = tuple(LatentClass.parse(s) for s in data["classes"])
        theta = np.array([data["theta"][str(g)] for g in classes], dtype=float)
        K, p = theta.shape
        mu = np.zeros((4, K, p))
        sigma2 = np.ones((4, K))
        active = np.zeros((4, K), dtype=bool)
        for key, comp in data["beta"].items():
            z, m, g = key.split(",")
            c = 2 * int(z) + int(m)
            k = classes.index(LatentClass.parse(g))
            mu[c, k] = comp["mu"]
            sigma2[c, k] = comp["sigma2"]
            active[c, k] = True
        return cls(classes, theta, mu, sigma2, active, Restriction(data.get("restriction", "none")))


def n_free_params(params: MixtureModelParams) -> int:
    K, p = len(params.classes), params.p
    n_active = int(params.active.sum())
    n_classes_used = int(params.active.any(axis=0).sum())
    k = (K - 1) * p
    if params.restriction is Restriction.SHARED_MEANS:
        k += n_classes_used * p + n_active
    elif params.restriction is Restriction.SHARED_VARIANCES:
        k += n_active * p + n_classes_used
    else:
        k += n_active * (p + 1)
    return k


@dataclass
class FitConfig:
    max_iter: int = 2000
    rel_tol: float = 1e-8
    n_starts: int = 10
    seed: int = 0
    variance_floor: float = 1e-6  # fraction of var(W)
    inner_max_iter: int = 100
    inner_tol: float = 1e-10
    # run each unrestricted start through a shared-means fit first
    warm_start: bool = False

    @classmethod
    def from_mapping(cls, values: dict) -> "FitConfig":
        cfg = cls()
        for key, raw in values.items():
            key = key.replace("-", "_")
            if not hasattr(cfg, key):
                raise KeyError(f"unknown config key: {key}")
            current = getattr(cfg, key)
            if isinstance(current, bool):
                value = str(raw).strip().lower() in ("1", "true", "yes", "on")
            else:
                value = type(current)(raw)
            setattr(cfg, key, value)
        return cfg


@dataclass
class FitResult:
    params: MixtureModelParams
    loglik: float
    aic: float
    iterations: int
    converged: bool
    n_free_params: int
    loglik_trace: list[float] = field(default_factory=list, repr=False)
    n_failed_starts: int = 0
    start_logliks: list[float] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            **self.params.to_json(),
            "loglik": self.loglik,
            "aic": self.aic,
            "iterations": self.iterations,
            "converged": self.converged,
            "n_free_params": self.n_free_params,
        }


# --------------------------------------------------------------------------
# model pieces


def class_prior_matrix(theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Row-wise softmax of ``X @ theta.T``; shape (n, K)."""
    eta = np.atleast_2d(X) @ theta.T
    return np.exp(eta - logsumexp(eta, axis=1, keepdims=True))


def class_prior(theta: np.ndarray, x, classes: Sequence[LatentClass]) -> ClassDistribution:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != theta.shape[1]:
        raise ValueError(f"covariate dimension {x.shape[0]} does not match theta ({theta.shape[1]})")
    probs = class_prior_matrix(theta, x[None, :])[0]
    probs = probs / probs.sum()
    return ClassDistribution.from_array(classes, probs)


def log_normal_pdf(w, mean, sigma2):
    return -0.5 * (LOG_2PI + np.log(sigma2)) - (w - mean) ** 2 / (2.0 * sigma2)


def component_density(params: MixtureModelParams, cell, g: LatentClass, x, w: float) -> float:
    c = 2 * cell[0] + cell[1]
    k = params.class_index(g)
    mean = float(np.dot(params.mu[c, k], np.asarray(x, dtype=float)))
    return float(np.exp(log_normal_pdf(w, mean, params.sigma2[c, k])))


def _log_prior(params: MixtureModelParams, design: _Design) -> np.ndarray | None:
    """Normalised log prior per unit, or None when it is constant (intercept-only design)."""
    if design.intercept_only:
        return None
    eta = design.data.X @ params.theta.T
    return eta - _lse_rows(eta)[:, None]


def _estep(params: MixtureModelParams, design: _Design) -> tuple[np.ndarray, float]:
    """Responsibilities (n, K) and the observed-data log-likelihood."""
    n, K = design.data.n, len(params.classes)
    resp = np.zeros((n, K))
    lp_all = _log_prior(params, design)
    if lp_all is None:
        t = params.theta[:, 0]
        lp_const = t - (t.max() + np.log(np.exp(t - t.max()).sum()))
    total = 0.0
    for c, idx, ks, Xs, ws in design.strata:
        means = Xs @ params.mu[c, ks].T
        s2 = params.sigma2[c, ks]
        lj = -0.5 * (LOG_2PI + np.log(s2)) - (ws[:, None] - means) ** 2 / (2.0 * s2)
        lj += lp_const[ks] if lp_all is None else lp_all[np.ix_(idx, ks)]
        norm = _lse_rows(lj)
        if not np.all(np.isfinite(norm)):
            raise FloatingPointError("a unit has zero total mixture weight")
        resp[np.ix_(idx, ks)] = np.exp(lj - norm[:, None])
        total += float(norm.sum())
    return resp, total


def _check_classes(params: MixtureModelParams, monotonic: bool | None) -> None:
    if monotonic is not None and tuple(enumerate_classes(monotonic)) != params.classes:
        raise ValueError("monotonic flag disagrees with the parameter class set")


def e_step(params: MixtureModelParams, data: Dataset, monotonic: bool | None = None) -> np.ndarray:
    """Posterior class responsibilities, shape (n, K) in ``params.classes`` order."""
    _check_classes(params, monotonic)
    return _estep(params, _Design(data, params.classes))[0]


def log_likelihood(params: MixtureModelParams, data: Dataset, monotonic: bool | None = None) -> float:
    """Observed-data log-likelihood of (Y, W) given (Z, M, X)."""
    _check_classes(params, monotonic)
    return _estep(params, _Design(data, params.classes))[1]


def _mlogit_objective(theta_free, X, R, s):
    K1 = R.shape[1] - 1
    theta = np.vstack([np.zeros((1, X.shape[1])), theta_free.reshape(K1, X.shape[1])])
    eta = X @ theta.T
    lse = _lse_rows(eta)
    return float(np.sum(R * eta) - np.sum(s * lse)), eta, lse


def m_step_theta(
    resp: np.ndarray,
    X: np.ndarray,
    theta0: np.ndarray | None = None,
    max_iter: int = 100,
    tol: float = 1e-10,
) -> np.ndarray:
    """Weighted multinomial logistic regression on soft labels.

    Each unit contributes one pseudo-observation per class, weighted by its
    responsibility.  Newton-Raphson with step halving; column 0 of ``resp``
    is the reference class.
    """
    R = np.asarray(resp, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, K = R.shape
    p = X.shape[1]
    s = R.sum(axis=1)
    totals = R.sum(axis=0)

    # intercept-only: the weighted MLE is the log ratio of class totals
    if p == 1 and np.allclose(X[:, 0], X[0, 0]) and X[0, 0] != 0 and np.all(totals > 0):
        theta = np.zeros((K, 1))
        theta[:, 0] = (np.log(totals) - np.log(totals[0])) / X[0, 0]
        return theta

    K1 = K - 1
    if theta0 is None:
        beta = np.zeros(K1 * p)
    else:
        beta = np.asarray(theta0, dtype=float)[1:].reshape(-1).copy()
    XX = (X[:, :, None] * X[:, None, :]).reshape(n, p * p)
    f, eta, lse = _mlogit_objective(beta, X, R, s)
    converged = False
    for _ in range(max_iter):
        P = np.exp(eta - lse[:, None])[:, 1:]
        grad = (X.T @ (R[:, 1:] - s[:, None] * P)).T.reshape(-1)
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        # negative Hessian blocks: sum_i s_i P_ik (delta_kl - P_il) x_i x_i^T
        Wkl = -(s[:, None, None] * P[:, :, None] * P[:, None, :])
        Wkl[:, np.arange(K1), np.arange(K1)] += s[:, None] * P
        H = (Wkl.reshape(n, K1 * K1).T @ XX).reshape(K1, K1, p, p).transpose(0, 2, 1, 3).reshape(K1 * p, K1 * p)
        H[np.diag_indices_from(H)] += 1e-12 * (1.0 + np.trace(H) / len(H))
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        lam = 1.0
        for _ in range(40):
            cand = beta + lam * step
            f_new, eta_new, lse_new = _mlogit_objective(cand, X, R, s)
            if f_new >= f:
                break
            lam *= 0.5
        else:
            converged = True  # no ascent direction left at machine precision
            break
        gain = f_new - f
        beta, f, eta, lse = cand, f_new, eta_new, lse_new
        if gain <= 1e-14 * (1.0 + abs(f)):
            converged = True
            break
    if not converged:
        warnings.warn(f"multinomial logistic M-step hit its {max_iter}-iteration cap", ConvergenceWarning)
    return np.vstack([np.zeros((1, p)), beta.reshape(K1, p)])


def _wls(X: np.ndarray, w: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Weighted least squares for each weight column of ``R``; returns (columns, p)."""
    R = R / R.sum(axis=0, keepdims=True)
    p = X.shape[1]
    if p == 1:
        return ((R.T @ w) / (R.T @ X[:, 0]))[:, None]
    A = np.einsum("ik,ip,iq->kpq", R, X, X)
    b = np.einsum("ik,ip,i->kp", R, X, w)
    scale = np.maximum(1.0, np.abs(A).max(axis=(1, 2)))
    sv = np.linalg.svd(A, compute_uv=False)
    if np.any(sv[:, -1] <= 1e-10 * scale):
        raise UnidentifiableComponentError("weighted design matrix is rank deficient")
    return np.linalg.solve(A, b[:, :, None])[:, :, 0]


def m_step_beta(
    resp: np.ndarray,
    data: Dataset,
    restriction: Restriction | str = Restriction.NONE,
    classes: Sequence[LatentClass] | None = None,
    prev: MixtureModelParams | None = None,
    variance_floor: float = 0.0,
    _design: _Design | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weighted least squares update of every instantiated (cell, class) component.

    Returns ``(mu, sigma2, active)``.  Under shared means the pooled fit
    weights each cell by its current inverse variance (a conditional
    maximisation step), then refits variances.  Components with negligible
    total weight keep their previous values.
    """
    restriction = Restriction(restriction)
    if classes is None:
        classes = prev.classes if prev is not None else enumerate_classes(resp.shape[1] == 6)
    design = _design if _design is not None else _Design(data, classes)
    K, p = len(classes), data.p
    active = design.active
    mu = prev.mu.copy() if prev is not None else np.zeros((4, K, p))
    sigma2 = prev.sigma2.copy() if prev is not None else np.ones((4, K))
    weights = [resp[idx] for idx in design.cell_idx]
    totals = np.array([wc.sum(axis=0) if len(wc) else np.zeros(K) for wc in weights])
    ok = active & (totals > MIN_COMPONENT_WEIGHT)

    if restriction is Restriction.SHARED_MEANS:
        ks = np.flatnonzero(ok.any(axis=0))
        if len(ks):
            inv = np.where(ok, 1.0 / sigma2, 0.0)
            Rw = resp[:, ks] * inv[design.cell_of][:, ks]
            coef = _wls(data.X, data.w, Rw)
            for j, k in enumerate(ks):
                mu[active[:, k], k] = coef[j]
    else:
        for c in range(4):
            ks = np.flatnonzero(ok[c])
            if len(ks):
                mu[c, ks] = _wls(design.X_cell[c], design.w_cell[c], weights[c][:, ks])

    sse = np.zeros((4, K))
    for c in range(4):
        if len(design.cell_idx[c]):
            res = design.w_cell[c][:, None] - design.X_cell[c] @ mu[c].T
            sse[c] = np.sum(weights[c] * res**2, axis=0)

    if restriction is Restriction.SHARED_VARIANCES:
        for k in range(K):
            if ok[:, k].any():
                pooled = sse[ok[:, k], k].sum() / totals[ok[:, k], k].sum()
                sigma2[active[:, k], k] = max(pooled, variance_floor)
    else:
        sigma2[ok] = np.maximum(sse[ok] / totals[ok], variance_floor)
    return mu, sigma2, active.copy()


# --------------------------------------------------------------------------
# initialisation and fitting


def _initial_prior(data: Dataset, classes: tuple[LatentClass, ...]) -> np.ndarray:
    from .bounds import InfeasibleRatesError
    from .maxent import maxent_mono
    from .rates import CellRates

    K = len(classes)
    uniform = np.full(K, 1.0 / K)
    cell = data.cell
    if np.any(np.bincount(cell, minlength=4) == 0):
        return uniform
    d = CellRates({ExposureCell(*CELLS[c]): float(data.y[cell == c].mean()) for c in range(4)})
    try:
        base = maxent_mono(d)
    except InfeasibleRatesError:
        return uniform
    v = np.array([base[g] for g in classes])
    v = 0.9 * v + 0.1 * uniform
    return v / v.sum()


def _start_ordering(classes, start: int, rng: np.random.Generator) -> np.ndarray:
    """Rank classes for seeding component means.

    Starts 0 and 1 order classes by how many exposure cells produce the
    outcome (ascending, then descending); later starts use random orders.
    """
    K = len(classes)
    by_count = sorted(range(K), key=lambda k: (sum(classes[k]), classes[k]))
    if start == 0:
        order = by_count
    elif start == 1:
        order = by_count[::-1]
    else:
        order = list(rng.permutation(K))
    rank = np.empty(K, dtype=int)
    rank[order] = np.arange(K)
    return rank


def initial_params(
    data: Dataset,
    classes: tuple[LatentClass, ...],
    restriction: Restriction | str,
    rng: np.random.Generator,
    start: int = 0,
    variance_floor: float = 0.0,
    _design: _Design | None = None,
) -> MixtureModelParams:
    restriction = Restriction(restriction)
    design = _design if _design is not None else _Design(data, classes)
    K, p = len(classes), data.p
    pi0 = _initial_prior(data, classes)
    theta = np.zeros((K, p))
    theta[:, 0] = np.log(pi0) - np.log(pi0[0])
    theta += rng.uniform(-0.1, 0.1, size=(K, p))
    theta[0] = 0.0

    rank = _start_ordering(classes, start, rng)
    total_var = float(np.var(data.w)) if data.n > 1 else 1.0
    mu = np.zeros((4, K, p))
    sigma2 = np.full((4, K), max(total_var, variance_floor, 1e-12))
    order = np.argsort(rank)
    for c, _, ks, _, units in design.strata:
        ks = [k for k in order if k in set(ks.tolist())]
        # each class takes the quantile at the middle of its share of prior mass
        share = pi0[ks] / pi0[ks].sum()
        qs = np.quantile(units, np.cumsum(share) - 0.5 * share)
        sd = float(np.std(units)) if len(units) > 1 else math.sqrt(total_var)
        v = max(sd**2, variance_floor, 1e-12)
        for q, k in zip(qs, ks):
            mu[c, k, 0] = q + rng.normal(0.0, 0.1 * sd if sd > 0 else 0.1)
            sigma2[c, k] = v
    active = design.active.copy()
    if restriction is Restriction.SHARED_MEANS:
        for k in range(K):
            if active[:, k].any():
                mu[active[:, k], k] = mu[active[:, k], k].mean(axis=0)
    elif restriction is Restriction.SHARED_VARIANCES:
        for k in range(K):
            if active[:, k].any():
                sigma2[active[:, k], k] = sigma2[active[:, k], k].mean()
    return MixtureModelParams(tuple(classes), theta, mu, sigma2, active, restriction)


@dataclass
class _StartResult:
    params: MixtureModelParams
    loglik: float
    trace: list[float]
    iterations: int
    converged: bool


def run_em(
    data: Dataset,
    params: MixtureModelParams,
    config: FitConfig,
    _design: _Design | None = None,
) -> _StartResult:
    """Iterate E and M steps from ``params`` until the relative log-likelihood change drops below tolerance."""
    design = _design if _design is not None else _Design(data, params.classes)
    floor = config.variance_floor * float(np.var(data.w)) if data.n > 1 else config.variance_floor
    params = params.copy()
    resp, ll = _estep(params, design)
    trace = [ll]
    converged = False
    it = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for it in range(1, config.max_iter + 1):
            params.theta = m_step_theta(resp, data.X, params.theta, config.inner_max_iter, config.inner_tol)
            params.mu, params.sigma2, params.active = m_step_beta(
                resp, data, params.restriction, params.classes, params, floor, _design=design
            )
            resp, ll_new = _estep(params, design)
            trace.append(ll_new)
            if abs(ll_new - ll) < config.rel_tol * abs(ll):
                ll = ll_new
                converged = True
                break
            ll = ll_new
    return _StartResult(params, ll, trace, it, converged)


def fit_em(
    data: Dataset,
    monotonic: bool = True,
    restriction: Restriction | str = Restriction.NONE,
    config: FitConfig | None = None,
) -> FitResult:
    """Best of ``config.n_starts`` EM runs from randomised starting points."""
    config = config or FitConfig()
    restriction = Restriction(restriction)
    classes = enumerate_classes(monotonic)
    design = _Design(data, classes)
    floor = config.variance_floor * float(np.var(data.w)) if data.n > 1 else config.variance_floor
    streams = np.random.SeedSequence(config.seed).spawn(config.n_starts)
    best: _StartResult | None = None
    failed = 0
    lls = []
    for s, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        try:
            if config.warm_start and restriction is Restriction.NONE:
                init = initial_params(data, classes, Restriction.SHARED_MEANS, rng, s, floor, _design=design)
                init = run_em(data, init, replace(config, rel_tol=max(config.rel_tol, 1e-6)), _design=design).params
                init.restriction = Restriction.NONE
            else:
                init = initial_params(data, classes, restriction, rng, s, floor, _design=design)
            res = run_em(data, init, config, _design=design)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError):
            failed += 1
            lls.append(float("nan"))
            continue
        if not math.isfinite(res.loglik):
            failed += 1
            lls.append(float("nan"))
            continue
        lls.append(res.loglik)
        if best is None or res.loglik > best.loglik:
            best = res
    if best is None:
        raise FitFailedError("no EM start produced a finite likelihood")
    k = n_free_params(best.params)
    return FitResult(
        params=best.params,
        loglik=best.loglik,
        aic=2 * k - 2 * best.loglik,
        iterations=best.iterations,
        converged=best.converged,
        n_free_params=k,
        loglik_trace=best.trace,
        n_failed_starts=failed,
        start_logliks=lls,
    )


def aic(fit: FitResult) -> float:
    if not math.isfinite(fit.loglik):
        raise ValueError("log-likelihood is not finite")
    return 2 * fit.n_free_params - 2 * fit.loglik


def population_prior(params: MixtureModelParams, X: np.ndarray) -> ClassDistribution:
    """Average of the unit-level class priors over the rows of ``X``."""
    probs = class_prior_matrix(params.theta, X).mean(axis=0)
    return ClassDistribution.from_array(params.classes, probs / probs.sum())
