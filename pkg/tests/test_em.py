import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from conftest import make_dataset
from intercause.classes import ALL_CLASSES, MONOTONE_CLASSES, compatibility_matrix
from intercause.em import (
    ConvergenceWarning,
    Dataset,
    FitConfig,
    MixtureModelParams,
    Restriction,
    SchemaError,
    _wls,
    class_prior_matrix,
    e_step,
    fit_em,
    initial_params,
    log_likelihood,
    m_step_beta,
    m_step_theta,
    n_free_params,
    read_dataset_csv,
    run_em,
    write_dataset_csv,
)


def random_params(data, monotonic, restriction, rng):
    classes = MONOTONE_CLASSES if monotonic else ALL_CLASSES
    params = initial_params(data, classes, Restriction(restriction), rng, start=2)
    params.theta[1:] = rng.normal(0, 1, params.theta[1:].shape)
    return params


@settings(max_examples=40)
@given(st.integers(0, 10**6), st.booleans(), st.integers(1, 3))
def test_estep_rows_normalised_and_supported(seed, monotonic, p):
    rng = np.random.default_rng(seed)
    data = make_dataset(rng, 80, monotonic, p)
    params = random_params(data, monotonic, "none", rng)
    resp = e_step(params, data)
    np.testing.assert_allclose(resp.sum(axis=1), 1.0, atol=1e-10)
    compat = compatibility_matrix(params.classes)[data.z, data.m, data.y]
    assert np.all(resp[~compat] == 0.0)
    assert np.all(resp >= 0.0)


@settings(max_examples=60)
@given(
    st.integers(0, 10**6),
    st.booleans(),
    st.integers(1, 2),
    st.sampled_from([r.value for r in Restriction]),
    st.integers(30, 120),
)
def test_em_loglik_never_decreases(seed, monotonic, p, restriction, n):
    rng = np.random.default_rng(seed)
    data = make_dataset(rng, n, monotonic, p, sep=rng.uniform(0.5, 3.0))
    params = random_params(data, monotonic, restriction, rng)
    cfg = FitConfig(max_iter=40, rel_tol=0.0)
    try:
        res = run_em(data, params, cfg)
    except np.linalg.LinAlgError:
        return  # a component lost its support: the start is discarded in practice
    trace = np.array(res.trace)
    drops = trace[:-1] - trace[1:]
    assert np.all(drops <= 1e-8 * np.abs(trace[:-1]) + 1e-9), drops.max()


@settings(max_examples=50)
@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 5))
def test_wls_matches_normal_equations(seed, p, cols):
    rng = np.random.default_rng(seed)
    n = 40
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    w = rng.standard_normal(n) * 3 + 1
    R = rng.uniform(0.01, 1.0, (n, cols))
    got = _wls(X, w, R)
    for j in range(cols):
        A = X.T @ (R[:, j, None] * X)
        b = X.T @ (R[:, j] * w)
        oracle = np.linalg.solve(A, b)
        np.testing.assert_allclose(got[j], oracle, rtol=1e-8, atol=1e-8 * np.abs(oracle).max())


def test_mstep_beta_matches_per_component_regression(rng):
    data = make_dataset(rng, 200, True, 2)
    params = random_params(data, True, "none", rng)
    resp = e_step(params, data)
    mu, s2, active = m_step_beta(resp, data, "none", params.classes, params)
    for c in range(4):
        idx = np.flatnonzero(data.cell == c)
        for k in np.flatnonzero(active[c]):
            r = resp[idx, k]
            if r.sum() < 1e-8:
                continue
            X, w = data.X[idx], data.w[idx]
            beta = np.linalg.solve(X.T @ (r[:, None] * X), X.T @ (r * w))
            np.testing.assert_allclose(mu[c, k], beta, rtol=1e-8, atol=1e-10)
            assert s2[c, k] == pytest.approx(np.sum(r * (w - X @ beta) ** 2) / r.sum(), rel=1e-8)


def test_shared_variances_pool_across_cells(rng):
    data = make_dataset(rng, 200, True, 1)
    params = random_params(data, True, "shared-variances", rng)
    _, s2, active = m_step_beta(e_step(params, data), data, "shared-variances", params.classes, params)
    for k in range(6):
        vals = s2[active[:, k], k]
        assert np.allclose(vals, vals[0])


def test_shared_means_equal_across_cells(rng):
    data = make_dataset(rng, 200, True, 2)
    params = random_params(data, True, "shared-means", rng)
    mu, _, active = m_step_beta(e_step(params, data), data, "shared-means", params.classes, params)
    for k in range(6):
        vals = mu[active[:, k], k]
        assert np.allclose(vals, vals[0])


def _mlogit_negloglik(beta, X, R):
    K = R.shape[1]
    theta = np.vstack([np.zeros(X.shape[1]), beta.reshape(K - 1, -1)])
    eta = X @ theta.T
    lse = np.logaddexp.reduce(eta, axis=1)
    return -(np.sum(R * eta) - np.sum(R.sum(axis=1) * lse))


@settings(max_examples=20)
@given(st.integers(0, 10**6), st.integers(2, 3))
def test_theta_step_matches_generic_optimiser(seed, p):
    rng = np.random.default_rng(seed)
    n, K = 150, 4
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    R = rng.dirichlet(np.ones(K), n)
    theta = m_step_theta(R, X)
    oracle = minimize(_mlogit_negloglik, np.zeros((K - 1) * p), args=(X, R), method="BFGS", options={"gtol": 1e-10})
    assert _mlogit_negloglik(theta[1:].ravel(), X, R) <= oracle.fun + 1e-8
    np.testing.assert_allclose(theta[1:].ravel(), oracle.x, atol=1e-4)


def test_theta_intercept_only_closed_form():
    R = np.array([[0.2, 0.8], [0.6, 0.4], [0.5, 0.5]])
    theta = m_step_theta(R, np.ones((3, 1)))
    assert theta[1, 0] == pytest.approx(np.log(1.7 / 1.3))


def test_theta_step_cap_warns():
    rng = np.random.default_rng(1)
    X = np.column_stack([np.ones(50), rng.standard_normal(50)])
    R = rng.dirichlet(np.ones(3), 50)
    with pytest.warns(ConvergenceWarning):
        m_step_theta(R, X, max_iter=1, tol=0.0)


def test_fit_recovers_separated_mixture():
    rng = np.random.default_rng(7)
    n = 3000
    pi = np.array([0.4, 0.1, 0.15, 0.1, 0.1, 0.15])
    cls = rng.choice(6, n, p=pi)
    cell = rng.integers(0, 4, n)
    y = np.array(MONOTONE_CLASSES)[cls, cell]
    w = 10.0 * cls + rng.standard_normal(n)
    data = Dataset.from_arrays(cell >> 1, cell & 1, y, w)
    fit = fit_em(data, True, "none", FitConfig(n_starts=4, seed=0))
    est = class_prior_matrix(fit.params.theta, data.X)[0]
    np.testing.assert_allclose(est, np.bincount(cls, minlength=6) / n, atol=0.01)
    assert fit.converged
    assert fit.aic == pytest.approx(2 * fit.n_free_params - 2 * fit.loglik)


def test_fit_is_deterministic(rng):
    data = make_dataset(rng, 150, True, 2)
    a = fit_em(data, True, "none", FitConfig(n_starts=2, seed=3))
    b = fit_em(data, True, "none", FitConfig(n_starts=2, seed=3))
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())


def test_free_parameter_count():
    data = make_dataset(np.random.default_rng(0), 400, True, 1)
    params = random_params(data, True, "none", np.random.default_rng(0))
    n_active = int(params.active.sum())
    assert n_free_params(params) == 5 + 2 * n_active
    params.restriction = Restriction.SHARED_MEANS
    assert n_free_params(params) == 5 + 6 + n_active


def test_params_json_roundtrip(rng):
    data = make_dataset(rng, 100, False, 2)
    params = random_params(data, False, "none", rng)
    back = MixtureModelParams.from_json(json.loads(json.dumps(params.to_json())))
    assert log_likelihood(back, data) == pytest.approx(log_likelihood(params, data), rel=1e-12)


def test_dataset_csv_roundtrip(tmp_path, rng):
    data = make_dataset(rng, 30, True, 3)
    path = tmp_path / "d.csv"
    labels = [MONOTONE_CLASSES[i % 6] for i in range(30)]
    write_dataset_csv(data, path, labels)
    back, lab = read_dataset_csv(path)
    np.testing.assert_array_equal(back.X, data.X)
    np.testing.assert_array_equal(back.w, data.w)
    assert [MONOTONE_CLASSES.index(ALL_CLASSES[i]) for i in lab] == [i % 6 for i in range(30)]


def test_missing_w_column_is_schema_error(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("z,m,y,x1\n0,0,1,0.3\n")
    with pytest.raises(SchemaError):
        read_dataset_csv(path)


def test_dataset_rejects_non_binary():
    with pytest.raises(ValueError):
        Dataset.from_arrays([0, 2], [0, 1], [1, 0], [0.0, 1.0])


def test_monotonic_flag_must_match_params(rng):
    data = make_dataset(rng, 50, True, 1)
    params = random_params(data, True, "none", rng)
    with pytest.raises(ValueError):
        e_step(params, data, monotonic=False)


def test_config_from_mapping():
    cfg = FitConfig.from_mapping({"n-starts": "3", "rel_tol": "1e-6", "warm_start": "yes"})
    assert cfg.n_starts == 3 and cfg.rel_tol == 1e-6 and cfg.warm_start is True
    with pytest.raises(KeyError):
        FitConfig.from_mapping({"bogus": "1"})


def test_separated_classes_give_hard_labels():
    rng = np.random.default_rng(2)
    n = 600
    cls = rng.integers(0, 6, n)
    cell = rng.integers(0, 4, n)
    y = np.array(MONOTONE_CLASSES)[cls, cell]
    w = 100.0 * (cls - 2.5) + rng.standard_normal(n)
    data = Dataset.from_arrays(cell >> 1, cell & 1, y, w)
    fit = fit_em(data, True, "none", FitConfig(n_starts=2))
    resp = e_step(fit.params, data)
    assert resp.max(axis=1).min() > 1 - 1e-6


def test_aic_formula():
    from intercause.em import FitResult, aic

    fit = FitResult(None, -10.0, 0.0, 1, True, 3, [], 0, [])
    assert aic(fit) == 26


def test_general_shared_means_count():
    data = make_dataset(np.random.default_rng(0), 2000, False, 1)
    params = random_params(data, False, "shared-means", np.random.default_rng(0))
    n_active = int(params.active.sum())
    assert n_free_params(params) == 15 + 16 + n_active
