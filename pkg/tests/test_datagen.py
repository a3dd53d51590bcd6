import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intercause.classes import MONOTONE_CLASSES, outcome_under
from intercause.datagen import (
    ERROR_DISTS,
    REPLICA_STRATA,
    SIM_MU,
    SimConfig,
    _softmax,
    generate_asbestos_replica,
    generate_simulation,
    standard_errors,
)
from intercause.rates import ASBESTOS_COUNTS


def test_simulation_is_deterministic():
    a, la = generate_simulation(SimConfig(n=200, seed=4, error_dist="t5"))
    b, lb = generate_simulation(SimConfig(n=200, seed=4, error_dist="t5"))
    np.testing.assert_array_equal(a.w, b.w)
    np.testing.assert_array_equal(a.X, b.X)
    assert la == lb


@settings(max_examples=20)
@given(st.integers(0, 10**6), st.sampled_from(ERROR_DISTS))
def test_labels_consistent_with_outcomes(seed, dist):
    data, labels = generate_simulation(SimConfig(n=100, seed=seed, error_dist=dist))
    for z, m, y, g in zip(data.z, data.m, data.y, labels):
        assert outcome_under(g, (z, m)) == y


@pytest.mark.parametrize("dist", ERROR_DISTS)
def test_error_moments(dist):
    rng = np.random.default_rng(11)
    e = standard_errors(dist, 200_000, rng)
    se = 1 / np.sqrt(len(e))
    assert abs(e.mean()) < 4 * se
    assert abs(e.var() - 1) < 0.05


def test_bad_config():
    with pytest.raises(ValueError):
        SimConfig(error_dist="cauchy")
    with pytest.raises(ValueError):
        SimConfig(n=0)


def test_class_frequencies_match_softmax():
    cfg = SimConfig(n=100_000, seed=1)
    data, labels = generate_simulation(cfg)
    probs = _softmax(data.X @ cfg.theta.T)
    idx = np.array([MONOTONE_CLASSES.index(g) for g in labels])
    for k in range(6):
        hit = idx == k
        # each indicator has variance p(1-p) given X, so the sum has an exact Bernoulli-sum SD
        sd = np.sqrt(np.sum(probs[:, k] * (1 - probs[:, k])))
        assert abs(hit.sum() - probs[:, k].sum()) < 3 * sd


def test_w_means_follow_class_regressions():
    cfg = SimConfig(n=100_000, seed=2)
    data, labels = generate_simulation(cfg)
    idx = np.array([MONOTONE_CLASSES.index(g) for g in labels])
    for k in range(6):
        for c in range(4):
            sel = (idx == k) & (data.cell == c)
            resid = data.w[sel] - data.X[sel] @ SIM_MU[k]
            assert abs(resid.mean()) < 3 * cfg.sigma[k] / np.sqrt(sel.sum())


def test_replica_stratum_sizes_and_rates():
    data = generate_asbestos_replica(0)
    assert data.n == 21319
    counts = data.stratum_counts()
    for key, (size, _) in REPLICA_STRATA.items():
        assert counts[key] == size
    for (z, m), (cases, total) in ASBESTOS_COUNTS.counts.items():
        assert counts[(z, m, 1)] == cases and counts[(z, m, 1)] + counts[(z, m, 0)] == total


def test_replica_weights_sum_to_one():
    for size, mix in REPLICA_STRATA.values():
        assert sum(mix.values()) == pytest.approx(1.0, abs=1e-12)


def test_replica_single_component_moments():
    data = generate_asbestos_replica(3)
    sel = (data.z == 1) & (data.m == 1) & (data.y == 0)
    w = data.w[sel]
    assert abs(w.mean() - 72) < 3 * 4 / np.sqrt(len(w))
    assert abs(w.std() - 4) < 3 * 4 / np.sqrt(2 * len(w))


def test_replica_deterministic_and_seed_sensitive():
    a = generate_asbestos_replica(5)
    b = generate_asbestos_replica(5)
    c = generate_asbestos_replica(6)
    np.testing.assert_array_equal(a.w, b.w)
    assert not np.array_equal(a.w, c.w)


def test_replica_labels_compatible():
    data, labels = generate_asbestos_replica(0, return_labels=True)
    for z, m, y, g in zip(data.z[:500], data.m[:500], data.y[:500], labels[:500]):
        assert outcome_under(g, (z, m)) == y
