"""Per-cell outcome rates and the two class masses they identify."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .classes import CELLS, ExposureCell


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class CellCounts:
    """Outcome counts per exposure cell: ``{cell: (cases, total)}``."""

    counts: Mapping[ExposureCell, tuple[int, int]]

    def __post_init__(self) -> None:
        fixed = {}
        for cell in CELLS:
            if cell not in self.counts:
                raise InsufficientDataError(f"no counts for cell {cell}")
            cases, total = self.counts[cell]
            if total <= 0:
                raise InsufficientDataError(f"cell {cell} has zero total")
            if not 0 <= cases <= total:
                raise ValueError(f"cell {cell}: need 0 <= cases <= total, got {cases}/{total}")
            fixed[cell] = (cases, total)
        object.__setattr__(self, "counts", fixed)

    @classmethod
    def from_tuples(cls, *rows: tuple[int, int, int, int]) -> "CellCounts":
        return cls({ExposureCell(z, m): (c, n) for z, m, c, n in rows})


@dataclass(frozen=True)
class CellRates:
    """delta[z, m] = pr(Y = 1 | Z = z, M = m)."""

    delta: Mapping[ExposureCell, float]

    def __post_init__(self) -> None:
        fixed = {}
        for cell in CELLS:
            d = float(self.delta[cell])
            if not 0.0 <= d <= 1.0:
                raise ValueError(f"rate for cell {cell} outside [0, 1]: {d}")
            fixed[ExposureCell(*cell)] = d
        object.__setattr__(self, "delta", fixed)

    @classmethod
    def from_values(cls, d00: float, d01: float, d10: float, d11: float) -> "CellRates":
        return cls(dict(zip(CELLS, (d00, d01, d10, d11))))

    def __getitem__(self, cell) -> float:
        return self.delta[ExposureCell(*cell)]

    def values(self) -> tuple[float, float, float, float]:
        return tuple(self.delta[c] for c in CELLS)

    def cell_probability(self, z: int, m: int, y: int) -> float:
        d = self.delta[ExposureCell(z, m)]
        return d if y == 1 else 1.0 - d

    def to_json(self) -> dict[str, float]:
        return {str(c): d for c, d in self.delta.items()}


def rates_from_counts(c: CellCounts) -> CellRates:
    return CellRates({cell: cases / total for cell, (cases, total) in c.counts.items()})


def identified_masses(d: CellRates) -> tuple[float, float]:
    """Return ``(pi_0000, pi_1111) = (1 - delta11, delta00)``; valid under monotonicity."""
    return 1.0 - d[1, 1], d[0, 0]


def monotonicity_consistency(d: CellRates) -> tuple[bool, list[str]]:
    """Check the observable chains d00 <= d01 <= d11 and d00 <= d10 <= d11.

    Advisory only: a passing check does not establish monotonicity.
    """
    pairs = [((0, 0), (0, 1)), ((0, 1), (1, 1)), ((0, 0), (1, 0)), ((1, 0), (1, 1))]
    violations = [
        f"delta{a[0]}{a[1]} <= delta{b[0]}{b[1]} ({d[a]:.6g} > {d[b]:.6g})"
        for a, b in pairs
        if d[a] > d[b]
    ]
    return not violations, violations


def read_counts_csv(path: str | Path) -> CellCounts:
    """Read a 4-row ``z,m,cases,total`` file."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"z", "m", "cases", "total"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"counts file missing columns: {sorted(missing)}")
        rows = {}
        for row in reader:
            cell = ExposureCell(int(row["z"]), int(row["m"]))
            if cell in rows:
                raise ValueError(f"duplicate row for cell {cell}")
            rows[cell] = (int(row["cases"]), int(row["total"]))
    return CellCounts(rows)


def write_counts_csv(c: CellCounts, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "m", "cases", "total"])
        for cell in CELLS:
            w.writerow([cell.z, cell.m, *c.counts[cell]])


# Lung-cancer summary counts by smoking (z) and asbestos exposure (m).
ASBESTOS_COUNTS = CellCounts.from_tuples((0, 0, 6, 5057), (0, 1, 5, 749), (1, 0, 118, 12383), (1, 1, 141, 3130))
