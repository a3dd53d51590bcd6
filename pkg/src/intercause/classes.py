"""Latent potential-outcome classes for two binary exposures.

A class ``G = rstu`` records the outcome a unit would have under each of the
four exposure cells, in the order (0,0), (0,1), (1,0), (1,1).  Classes are
ordered canonically by the 4-bit integer ``8r + 4s + 2t + u``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple

import numpy as np


class ExposureCell(NamedTuple):
    z: int
    m: int

    def __str__(self) -> str:
        return f"{self.z},{self.m}"


CELLS: tuple[ExposureCell, ...] = tuple(ExposureCell(z, m) for z in (0, 1) for m in (0, 1))


class LatentClass(NamedTuple):
    r: int
    s: int
    t: int
    u: int

    @property
    def index(self) -> int:
        return 8 * self.r + 4 * self.s + 2 * self.t + self.u

    @classmethod
    def from_index(cls, k: int) -> "LatentClass":
        if not 0 <= k < 16:
            raise ValueError(f"class index out of range: {k}")
        return cls((k >> 3) & 1, (k >> 2) & 1, (k >> 1) & 1, k & 1)

    @classmethod
    def parse(cls, text: str) -> "LatentClass":
        text = text.strip()
        if len(text) != 4 or set(text) - {"0", "1"}:
            raise ValueError(f"not a 4-bit class label: {text!r}")
        return cls(*(int(c) for c in text))

    def is_monotone(self) -> bool:
        r, s, t, u = self
        return r <= s <= u and r <= t <= u

    def __str__(self) -> str:
        return f"{self.r}{self.s}{self.t}{self.u}"


class Evidence(NamedTuple):
    """Observed (z, m, y).  ``Evidence.empty()`` conditions on nothing."""

    z: int | None = None
    m: int | None = None
    y: int | None = None

    @classmethod
    def empty(cls) -> "Evidence":
        return cls(None, None, None)

    @classmethod
    def parse(cls, text: str) -> "Evidence":
        text = text.strip()
        if text.lower() == "empty":
            return cls.empty()
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3 or any(p not in ("0", "1") for p in parts):
            raise ValueError(f"evidence must be 'z,m,y' with binary entries or 'empty', got {text!r}")
        return cls(*(int(p) for p in parts))

    @property
    def is_empty(self) -> bool:
        return self.z is None

    @property
    def cell(self) -> ExposureCell:
        if self.is_empty:
            raise ValueError("empty evidence has no exposure cell")
        return ExposureCell(self.z, self.m)

    def __str__(self) -> str:
        return "empty" if self.is_empty else f"{self.z},{self.m},{self.y}"


def _check_evidence(ev: Evidence) -> None:
    filled = [v is not None for v in ev]
    if any(filled) and not all(filled):
        raise ValueError(f"evidence must be fully specified or empty: {tuple(ev)}")
    for v in ev:
        if v is not None and v not in (0, 1):
            raise ValueError(f"evidence entries must be binary: {tuple(ev)}")


ALL_EVIDENCE: tuple[Evidence, ...] = tuple(Evidence(z, m, y) for z in (0, 1) for m in (0, 1) for y in (0, 1))

ALL_CLASSES: tuple[LatentClass, ...] = tuple(LatentClass.from_index(k) for k in range(16))
MONOTONE_CLASSES: tuple[LatentClass, ...] = tuple(g for g in ALL_CLASSES if g.is_monotone())


def enumerate_classes(monotonic: bool) -> tuple[LatentClass, ...]:
    return MONOTONE_CLASSES if monotonic else ALL_CLASSES


def outcome_under(g: LatentClass, cell: ExposureCell | tuple[int, int]) -> int:
    z, m = cell
    return g[2 * z + m]


def compatible_classes(ev: Evidence, monotonic: bool) -> tuple[LatentClass, ...]:
    """Classes whose potential outcome in the evidence cell equals the observed y."""
    _check_evidence(ev)
    if ev.is_empty:
        raise ValueError("compatible_classes needs non-empty evidence")
    cell = ev.cell
    return tuple(g for g in enumerate_classes(monotonic) if outcome_under(g, cell) == ev.y)


def compatibility_matrix(classes: Iterable[LatentClass]) -> np.ndarray:
    """Boolean array ``[2, 2, 2, K]``: entry (z, m, y, k) is True when class k can produce y in cell (z, m)."""
    classes = tuple(classes)
    out = np.zeros((2, 2, 2, len(classes)), dtype=bool)
    for k, g in enumerate(classes):
        for z, m in CELLS:
            out[z, m, outcome_under(g, (z, m)), k] = True
    return out


SUM_TOL = 1e-10


@dataclass(frozen=True)
class ClassDistribution:
    """Probability vector over latent classes (canonical order)."""

    probs: Mapping[LatentClass, float]
    allowed: tuple[LatentClass, ...] = field(default=ALL_CLASSES, compare=False)

    def __post_init__(self) -> None:
        ordered = dict(sorted((LatentClass(*g), float(p)) for g, p in self.probs.items()))
        object.__setattr__(self, "probs", ordered)
        bad = [g for g in ordered if g not in self.allowed]
        if bad:
            raise ValueError(f"classes outside the allowed set: {[str(g) for g in bad]}")
        for g, p in ordered.items():
            if not (p >= 0.0) or not math.isfinite(p):
                raise ValueError(f"invalid probability {p} for class {g}")
        total = math.fsum(ordered.values())
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def from_array(cls, classes: Iterable[LatentClass], values, allowed=None, normalize=False) -> "ClassDistribution":
        classes = tuple(classes)
        values = np.asarray(values, dtype=float)
        if normalize:
            values = values / values.sum()
        return cls(dict(zip(classes, values.tolist())), allowed if allowed is not None else ALL_CLASSES)

    def __getitem__(self, g: LatentClass | str) -> float:
        if isinstance(g, str):
            g = LatentClass.parse(g)
        return self.probs.get(g, 0.0)

    def __iter__(self) -> Iterator[LatentClass]:
        return iter(self.probs)

    def __len__(self) -> int:
        return len(self.probs)

    def classes(self) -> tuple[LatentClass, ...]:
        return tuple(self.probs)

    def as_array(self, classes: Iterable[LatentClass]) -> np.ndarray:
        return np.array([self[g] for g in classes])

    def entropy(self) -> float:
        return -math.fsum(p * math.log(p) for p in self.probs.values() if p > 0)

    def to_json(self) -> dict[str, float]:
        return {str(g): p for g, p in self.probs.items()}

    @classmethod
    def from_json(cls, data: Mapping[str, float]) -> "ClassDistribution":
        return cls({LatentClass.parse(k): float(v) for k, v in data.items()})
