"""Recover latent-class labels from separate per-stratum mixture fits.

Each class produces one component in every exposure cell, sitting in the
y-stratum given by its potential outcome there.  When some key (the mean,
the variance, or the class proportion) is shared by a class across cells
and distinct between classes, lining the keys up across cells spells out
the class: the component found in stratum (z, m, y) contributes bit y at
position (z, m).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.mixture import GaussianMixture

from .classes import CELLS, LatentClass
from .em import Dataset

Stratum = tuple[int, int, int]


class AmbiguousMatchError(ValueError):
    """Two components in one cell are indistinguishable under the chosen key."""


@dataclass(frozen=True)
class CellMixture:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def keys(self, key: str, cell_rate: float | None = None) -> np.ndarray:
        if key == "mean":
            return self.means
        if key == "variance":
            return self.variances
        if key == "proportion":
            if cell_rate is None:
                raise ValueError("proportion keys need pr(Y = y | cell)")
            return self.weights * cell_rate
        raise ValueError(f"unknown matching key {key!r}")


def fit_stratum_mixtures(
    data: Dataset,
    n_components: Mapping[Stratum, int],
    seed: int = 0,
    n_init: int = 5,
) -> dict[Stratum, CellMixture]:
    """Fit a univariate Gaussian mixture to W within each listed (z, m, y) stratum."""
    out = {}
    for s, (stratum, k) in enumerate(sorted(n_components.items())):
        z, m, y = stratum
        w = data.w[(data.z == z) & (data.m == m) & (data.y == y)]
        if k == 0:
            continue
        if len(w) < k:
            raise ValueError(f"stratum {stratum} has {len(w)} units for {k} components")
        gm = GaussianMixture(k, n_init=n_init, random_state=seed + s, reg_covar=1e-6 * max(np.var(w), 1e-12))
        gm.fit(w[:, None])
        out[stratum] = CellMixture(gm.weights_.copy(), gm.means_[:, 0].copy(), gm.covariances_.reshape(-1).copy())
    return out


@dataclass
class LabelAssignment:
    labels: dict[Stratum, list[LatentClass | None]]
    unmatched: list[tuple[Stratum, int]] = field(default_factory=list)

    def classes(self) -> set[LatentClass]:
        return {g for row in self.labels.values() for g in row if g is not None}


def match_class_labels(keys: Mapping[Stratum, Sequence[float]], tol: float) -> LabelAssignment:
    """Assign each component to a class by matching its key across the four exposure cells.

    ``keys[(z, m, y)]`` lists one key per component of that stratum.  Every
    component of cell (0, 0) seeds a candidate class; in each other cell the
    nearest key within ``tol`` supplies that cell's outcome bit.
    """
    cell_keys: dict[tuple[int, int], list[tuple[float, int, int]]] = {c: [] for c in CELLS}
    for (z, m, y), ks in keys.items():
        for j, k in enumerate(ks):
            cell_keys[(z, m)].append((float(k), y, j))

    for cell, entries in cell_keys.items():
        vals = sorted(v for v, _, _ in entries)
        gaps = np.diff(vals)
        if np.any(gaps <= tol):
            raise AmbiguousMatchError(f"cell {cell}: two components have keys within {tol}")

    labels: dict[Stratum, list[LatentClass | None]] = {s: [None] * len(ks) for s, ks in keys.items()}
    used: set[tuple[Stratum, int]] = set()
    for ref, y0, j0 in cell_keys[CELLS[0]]:
        bits = [y0]
        hits = [((0, 0, y0), j0)]
        for cell in CELLS[1:]:
            near = [(abs(v - ref), y, j) for v, y, j in cell_keys[cell] if abs(v - ref) <= tol]
            if not near:
                break
            _, y, j = min(near)
            bits.append(y)
            hits.append(((cell[0], cell[1], y), j))
        if len(bits) < 4:
            continue
        g = LatentClass(*bits)
        for stratum, j in hits:
            labels[stratum][j] = g
            used.add((stratum, j))
    unmatched = [(s, j) for s, ks in keys.items() for j in range(len(ks)) if (s, j) not in used]
    return LabelAssignment(labels, unmatched)
