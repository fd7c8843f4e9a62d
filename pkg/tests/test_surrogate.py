import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hpsearch.surrogate import (
    FitError,
    GPConfig,
    GPModel,
    condition,
    destandardize,
    fit,
    kernel,
    log_marginal_likelihood,
    predict,
    predict_many,
    standardize,
)

from oracles import gp_posterior_standardized


def test_kernel_closed_form():
    assert kernel([0.0], [1.0], [1.0], 1.0) == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert kernel([0.2, 0.7], [0.2, 0.7], [0.3, 2.0], 2.5) == 2.5


def test_kernel_symmetric_and_mismatch(rng):
    for _ in range(20):
        a, b = rng.random(4), rng.random(4)
        ls = rng.uniform(0.1, 2, 4)
        assert kernel(a, b, ls) == kernel(b, a, ls)
    with pytest.raises(ValueError):
        kernel([0.0, 1.0], [0.0], [1.0])


def test_config_validation():
    with pytest.raises(ValueError):
        GPConfig(jitter=1e-3)
    with pytest.raises(ValueError):
        GPConfig(jitter=0.0)
    with pytest.raises(ValueError):
        GPConfig(signal_variance=0)


def test_two_point_model_matches_explicit_inverse():
    x = np.array([[0.1, 0.4], [0.7, 0.2]])
    losses = np.array([0.9, 0.3])
    ls, noise = np.array([0.5, 0.8]), 0.01
    m = condition(x, losses, ls, noise_variance=noise, jitter=1e-12)
    y = (losses - losses.mean()) / losses.std()
    k12 = math.exp(-0.5 * np.sum(((x[0] - x[1]) / ls) ** 2))
    a, d = 1 + noise + 1e-12, 1 + noise + 1e-12
    det = a * d - k12 * k12
    kinv = np.array([[d, -k12], [-k12, a]]) / det
    probe = np.array([0.3, 0.5])
    ks = np.array([math.exp(-0.5 * np.sum(((probe - xi) / ls) ** 2)) for xi in x])
    mean_std = ks @ kinv @ y
    var_std = 1.0 - ks @ kinv @ ks
    post = predict(m, probe)
    assert post.mean == pytest.approx(mean_std * losses.std() + losses.mean(), abs=1e-8)
    assert post.variance == pytest.approx(var_std * losses.std() ** 2, abs=1e-8)


def test_noise_free_interpolation():
    x = np.array([[0.0], [0.5], [1.0]])
    losses = np.array([1.0, 0.2, 0.6])
    m = condition(x, losses, [0.3], noise_variance=0.0)
    for xi, li in zip(x, losses):
        p = predict(m, xi)
        assert p.mean == pytest.approx(li, abs=1e-6)
        assert p.variance <= 1e-6


def test_prior_reversion_far_away():
    x = np.array([[0.0, 0.0], [0.1, 0.2]])
    losses = np.array([1.0, 2.0])
    m = condition(x, losses, [0.05, 0.05], noise_variance=0.0)
    p = predict(m, np.array([50.0, 50.0]))
    assert p.mean == pytest.approx(losses.mean(), abs=1e-6)
    assert p.variance == pytest.approx(m.prior_variance - m.noise_variance * m.y_scale**2, abs=1e-6)


def test_predict_dimension_mismatch():
    m = condition([[0.0, 1.0]], [1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        predict(m, np.array([0.0]))


def test_fit_preconditions():
    with pytest.raises(FitError):
        fit([[0.0]], [1.0])
    with pytest.raises(FitError):
        fit([[0.0], [1.0]], [1.0, math.nan])


def test_duplicates_fit():
    x = np.array([[0.2, 0.2], [0.2, 0.2], [0.8, 0.1]])
    m = fit(x, [1.0, 1.0, 0.5], GPConfig(noise_variance=1e-4))
    assert np.all(m.lengthscales > 0)


def test_lml_scalar_closed_form():
    sigma2 = 0.3
    m = condition([[0.5]], [2.0], [1.0], noise_variance=sigma2, jitter=1e-12)
    y = m.train_y[0]
    k = 1 + sigma2 + 1e-12
    expected = -0.5 * y * y / k - 0.5 * math.log(k) - 0.5 * math.log(2 * math.pi)
    assert log_marginal_likelihood(m) == pytest.approx(expected, abs=1e-12)


def _simulate(ls_true, n, seed, noise=1e-4, dims=1):
    rng = np.random.default_rng(seed)
    x = rng.random((n, dims))
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    k = np.exp(-0.5 * d2 / ls_true**2) + noise * np.eye(n)
    y = np.linalg.cholesky(k) @ rng.standard_normal(n)
    return x, y


def test_lml_prefers_true_noise():
    x, y = _simulate(0.3, 30, 0, noise=1e-2)
    good = condition(x, y, [0.3], noise_variance=1e-2)
    bad = condition(x, y, [0.3], noise_variance=50.0)
    assert log_marginal_likelihood(good) > log_marginal_likelihood(bad)


def test_lml_permutation_invariant(rng):
    x, y = rng.random((7, 3)), rng.random(7)
    perm = rng.permutation(7)
    a = condition(x, y, [0.4, 0.6, 1.0], noise_variance=0.01)
    b = condition(x[perm], y[perm], [0.4, 0.6, 1.0], noise_variance=0.01)
    assert log_marginal_likelihood(a) == pytest.approx(log_marginal_likelihood(b), abs=1e-10)


def test_recovers_known_lengthscale():
    grid = GPConfig().grids(1)[0]
    i = int(np.argmin(np.abs(np.log(grid) - math.log(0.3))))
    near = set(grid[max(i - 1, 0):i + 2])
    hits = 0
    for seed in range(20):
        x, y = _simulate(0.3, 40, seed)
        m = fit(x, y, GPConfig(seed=seed))
        hits += m.lengthscales[0] in near
    assert hits >= 16


def test_fit_not_worse_than_unit_lengthscales(rng):
    for seed in range(5):
        x, y = rng.random((12, 4)), rng.random(12)
        cfg = GPConfig(seed=seed, fit_noise=False)
        m = fit(x, y, cfg)
        ones = condition(x, y, np.ones(4), noise_variance=cfg.noise_variance, jitter=cfg.jitter)
        assert log_marginal_likelihood(m) >= log_marginal_likelihood(ones) - 1e-9


def test_cholesky_reconstructs_regularized_kernel(rng):
    x, y = rng.random((10, 3)), rng.random(10)
    m = fit(x, y, GPConfig(seed=1))
    from hpsearch.surrogate import kernel_matrix
    k = kernel_matrix(x, x, m.lengthscales) + (m.noise_variance + m.jitter) * np.eye(10)
    rec = m.chol @ m.chol.T
    assert np.linalg.norm(rec - k) / np.linalg.norm(k) < 1e-8


def test_text_roundtrip(rng):
    x, y = rng.random((6, 2)), rng.random(6)
    m = fit(x, y, GPConfig(seed=2))
    m2 = GPModel.loads(m.dumps())
    probe = rng.random((20, 2))
    np.testing.assert_allclose(predict_many(m, probe)[0], predict_many(m2, probe)[0], atol=1e-12)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
def test_standardize_roundtrip(values):
    y, mu, sc = standardize(values)
    np.testing.assert_allclose(destandardize(y, mu, sc), values, atol=1e-12 * max(1.0, max(map(abs, values))))


@given(st.integers(0, 10_000), st.integers(1, 8))
def test_matches_gaussian_elimination_oracle(seed, n):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    x, losses = rng.random((n, d)), rng.normal(size=n)
    ls, noise = rng.uniform(0.2, 2.0, d), float(rng.uniform(1e-3, 0.1))
    m = condition(x, losses, ls, noise_variance=noise, jitter=1e-12)
    probe = rng.random(d)
    mean, var = predict_many(m, probe[None])
    om, ov = gp_posterior_standardized(x.tolist(), m.train_y.tolist(), ls, noise + m.jitter, probe.tolist())
    assert (mean[0] - m.y_mean) / m.y_scale == pytest.approx(om, abs=1e-8)
    assert var[0] / m.y_scale**2 == pytest.approx(max(ov, 0.0), abs=1e-8)


@given(st.integers(0, 10_000))
def test_extra_point_never_raises_variance(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random((5, 2)), rng.random(5)
    ls = [0.5, 0.5]
    probe = rng.random((50, 2))
    a = condition(x[:4], y[:4], ls, noise_variance=0.0, jitter=1e-10)
    b = condition(x, y, ls, noise_variance=0.0, jitter=1e-10)
    va = predict_many(a, probe)[1] / a.y_scale**2
    vb = predict_many(b, probe)[1] / b.y_scale**2
    assert np.all(vb <= va + 1e-9)


@given(st.integers(0, 10_000))
def test_variance_bounds(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random((8, 3)), rng.random(8)
    m = fit(x, y, GPConfig(seed=seed, lml_restarts=1, max_sweeps=3))
    _, v = predict_many(m, rng.random((1000, 3)))
    assert np.all(v >= 0)
    assert np.all(v <= m.prior_variance + 1e-9)
