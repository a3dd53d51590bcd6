import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from intercause.bootstrap import BootstrapInstabilityError, ReplicateFailure, bootstrap, make_pipeline
from intercause.em import Dataset, FitConfig


@pytest.fixture
def data():
    return make_dataset(np.random.default_rng(9), 300, True, 1)


def test_constant_pipeline_is_degenerate(data):
    res = bootstrap(data, "constant", B=20, seed=1)
    e = res.estimates["constant"]
    assert e.se == 0.0 and e.ci_low == e.ci_high == 1.0
    assert res.n_failed == 0


def test_mean_se_matches_classical_formula():
    rng = np.random.default_rng(0)
    n = 400
    data = Dataset.from_arrays(np.zeros(n, int), np.zeros(n, int), np.zeros(n, int), rng.exponential(2.0, n))
    res = bootstrap(data, "mean_w", B=2000, seed=3)
    classical = data.w.std(ddof=1) / np.sqrt(n)
    assert res.estimates["mean_w"].se == pytest.approx(classical, rel=0.10)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_same_seed_same_intervals(seed):
    data = make_dataset(np.random.default_rng(seed), 60, True, 1)
    a = bootstrap(data, "mean_w", B=30, seed=seed)
    b = bootstrap(data, "mean_w", B=30, seed=seed)
    assert a.to_json() == b.to_json()
    np.testing.assert_array_equal(a.replicates, b.replicates)


def test_parallel_matches_serial(data):
    a = bootstrap(data, "mean_w", B=40, seed=7, n_jobs=1)
    b = bootstrap(data, "mean_w", B=40, seed=7, n_jobs=2)
    np.testing.assert_array_equal(a.replicates, b.replicates)


def test_point_inside_interval(data):
    res = bootstrap(data, "mean_w", B=300, seed=2)
    e = res.estimates["mean_w"]
    assert e.ci_low <= e.point <= e.ci_high


def test_failures_counted_and_excluded(data):
    calls = {"n": 0}

    def flaky(d):
        calls["n"] += 1
        if calls["n"] % 10 == 0:
            raise ReplicateFailure("boom")
        return {"x": float(d.w.mean())}

    res = bootstrap(data, flaky, B=50, seed=0)
    assert res.n_failed == 5
    assert np.isnan(res.replicates).any(axis=1).sum() == 5


def test_too_many_failures_raise(data):
    def bad(d):
        if d.n != data.n or not np.array_equal(d.w, data.w):
            raise ReplicateFailure("nope")
        return {"x": 0.0}

    with pytest.raises(BootstrapInstabilityError):
        bootstrap(data, bad, B=10, seed=0)


def test_needs_two_replicates(data):
    with pytest.raises(ValueError):
        bootstrap(data, "constant", B=1)


def test_fit_attribute_pipeline_keys():
    data = make_dataset(np.random.default_rng(4), 200, True, 1)
    est = make_pipeline("fit+attribute", config=FitConfig(n_starts=1))
    out = est(data)
    assert {"pi_0000", "post_111_0001", "share_smoking", "share_other"} <= set(out)
    assert sum(v for k, v in out.items() if k.startswith("pi_")) == pytest.approx(1.0)


def test_unknown_pipeline():
    with pytest.raises(KeyError):
        make_pipeline("nope")
