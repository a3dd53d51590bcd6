import pytest

from intercause.rates import (
    ASBESTOS_COUNTS,
    CellCounts,
    CellRates,
    InsufficientDataError,
    identified_masses,
    monotonicity_consistency,
    rates_from_counts,
    read_counts_csv,
    write_counts_csv,
)


def test_rates_are_case_fractions():
    d = rates_from_counts(ASBESTOS_COUNTS)
    assert d[0, 0] == 6 / 5057 and d[1, 1] == 141 / 3130


def test_identified_masses():
    d = CellRates.from_values(0.1, 0.2, 0.3, 0.6)
    assert identified_masses(d) == pytest.approx((0.4, 0.1))


def test_consistency_flags_decreasing_rates():
    ok, notes = monotonicity_consistency(CellRates.from_values(0.1, 0.2, 0.3, 0.6))
    assert ok and notes == []
    ok, notes = monotonicity_consistency(CellRates.from_values(0.3, 0.2, 0.3, 0.6))
    assert not ok and len(notes) == 1


def test_zero_total_and_bad_counts():
    with pytest.raises(InsufficientDataError):
        CellCounts.from_tuples((0, 0, 0, 0), (0, 1, 1, 2), (1, 0, 1, 2), (1, 1, 1, 2))
    with pytest.raises(ValueError):
        CellCounts.from_tuples((0, 0, 3, 2), (0, 1, 1, 2), (1, 0, 1, 2), (1, 1, 1, 2))
    with pytest.raises(InsufficientDataError):
        CellCounts.from_tuples((0, 0, 1, 2), (0, 1, 1, 2), (1, 0, 1, 2))


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "counts.csv"
    write_counts_csv(ASBESTOS_COUNTS, path)
    assert read_counts_csv(path) == ASBESTOS_COUNTS


def test_csv_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("z,m,cases\n0,0,1\n")
    with pytest.raises(ValueError):
        read_counts_csv(path)
