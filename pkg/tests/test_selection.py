import warnings

import numpy as np
import pytest

from supcp.model import FitConfig, FitResult, SupCpParams, fit_supcp, marginal_loglik
from supcp.selection import select_rank, split_indices, train_test_split
from supcp.selection import test_loglik as held_out_loglik
from supcp.tensor import cp_compose


def _supervised_rank_one(noise, seed=7):
    rng = np.random.default_rng(seed)
    n = 40
    y = rng.standard_normal((n, 2))
    u = (y @ np.array([[2.0], [-1.0]])) + 0.8 * rng.standard_normal((n, 1))
    v1 = rng.standard_normal((6, 1))
    v2 = rng.standard_normal((5, 1))
    x = cp_compose(u, [v1, v2])
    if noise:
        x = x + noise * rng.standard_normal(x.shape)
    return x, y


def test_split_is_deterministic_partition():
    tr_a, te_a = split_indices(100, 0.5, seed=3)
    tr_b, te_b = split_indices(100, 0.5, seed=3)
    assert np.array_equal(tr_a, tr_b)
    assert np.array_equal(te_a, te_b)
    assert len(tr_a) == 50 and len(te_a) == 50
    assert len(np.intersect1d(tr_a, te_a)) == 0
    assert np.array_equal(np.union1d(tr_a, te_a), np.arange(100))


def test_split_rejects_tiny_test_half():
    with pytest.raises(ValueError):
        split_indices(100, 0.99, seed=0)


def test_train_test_split_carries_covariates():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((10, 3, 2))
    y = rng.standard_normal((10, 2))
    (x_tr, y_tr), (x_te, y_te) = train_test_split(x, y, train_fraction=0.5, seed=1)
    assert x_tr.shape == (5, 3, 2) and x_te.shape == (5, 3, 2)
    assert y_tr.shape == (5, 2) and y_te.shape == (5, 2)
    stacked = np.concatenate([x_tr, x_te])
    assert sorted(map(tuple, stacked.reshape(10, -1))) == sorted(
        map(tuple, x.reshape(10, -1))
    )


def test_test_loglik_equals_train_loglik_on_same_data():
    rng = np.random.default_rng(13)
    x = rng.standard_normal((12, 4, 3))
    y = rng.standard_normal((12, 2))
    res = fit_supcp(x, y, FitConfig(rank=2, max_iters=30, anneal_iters=5, seed=0))
    assert held_out_loglik(x, y, res) == pytest.approx(res.loglik, rel=1e-10)


def test_test_loglik_closed_form_baseline():
    rng = np.random.default_rng(17)
    n, dims = 8, (3, 4)
    x = rng.standard_normal((n,) + dims)
    d = int(np.prod(dims))
    s2 = float(np.mean(x**2))
    params = SupCpParams(
        [np.eye(dims[0], 1), np.eye(dims[1], 1)],
        np.zeros((0, 1)),
        np.zeros((1, 1)),
        s2,
    )
    res = FitResult(
        params, None, np.array([]), True, 0, x_mean=np.zeros(dims), y_mean=None
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        got = held_out_loglik(x, None, res)
    want = -0.5 * n * d * (np.log(2 * np.pi) + np.log(s2)) - 0.5 * np.sum(
        x**2
    ) / s2
    assert got == pytest.approx(want, rel=1e-12)


def test_fitted_params_beat_random_perturbations():
    rng = np.random.default_rng(11)
    n = 30
    y = rng.standard_normal((n, 2))
    u = y @ np.array([[1.5, 0.0], [0.0, -1.0]]) + rng.standard_normal((n, 2))
    loadings = [rng.standard_normal((5, 2)), rng.standard_normal((4, 2))]
    x = cp_compose(u, loadings) + 0.5 * rng.standard_normal((n, 5, 4))
    res = fit_supcp(
        x, y, FitConfig(rank=2, max_iters=500, tol=1e-12, anneal_iters=10, seed=0)
    )
    base = held_out_loglik(x, y, res)
    prng = np.random.default_rng(99)
    for _ in range(20):
        p = res.params
        pert = SupCpParams(
            [v + 0.02 * prng.standard_normal(v.shape) for v in p.loadings],
            p.b + 0.02 * prng.standard_normal(p.b.shape),
            np.diag(np.abs(np.diag(p.sigma_f) * (1 + 0.02 * prng.standard_normal(2)))),
            p.sigma_e2 * (1 + 0.02 * prng.standard_normal()),
        )
        pert_res = FitResult(
            pert, None, res.loglik_trace, True, res.n_iters,
            x_mean=res.x_mean, y_mean=res.y_mean,
        )
        assert held_out_loglik(x, y, pert_res) <= base


def test_select_rank_noiseless_rank_one():
    x, y = _supervised_rank_one(noise=0.0)
    config = FitConfig(rank=1, max_iters=200, anneal_iters=10, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = select_rank(x, y, [1, 2, 3], config, train_fraction=0.5, split_seed=0)
    assert report.chosen_rank == 1


def test_select_rank_small_noise_comparison():
    x, y = _supervised_rank_one(noise=0.1)
    config = FitConfig(rank=1, max_iters=200, anneal_iters=10, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = select_rank(x, y, [1, 2, 3], config, train_fraction=0.5, split_seed=0)
    assert report.chosen_rank == 1
    assert np.all(np.isfinite(report.test_logliks))
    # nested models: training likelihood keeps rising, held-out peaks at truth
    assert np.all(np.diff(report.train_logliks) >= -1e-6)
    assert report.test_logliks[0] == max(report.test_logliks)


def test_select_rank_single_candidate():
    x, y = _supervised_rank_one(noise=0.2)
    config = FitConfig(rank=1, max_iters=60, anneal_iters=5, seed=0)
    report = select_rank(x, y, [2], config)
    assert report.chosen_rank == 2
    assert len(report.test_logliks) == 1


def test_select_rank_deterministic_report():
    x, y = _supervised_rank_one(noise=0.3)
    config = FitConfig(rank=1, max_iters=60, anneal_iters=5, seed=1)
    a = select_rank(x, y, [1, 2], config, split_seed=4)
    b = select_rank(x, y, [1, 2], config, split_seed=4)
    assert a.chosen_rank == b.chosen_rank
    assert np.array_equal(a.test_logliks, b.test_logliks)
    assert np.array_equal(a.train_logliks, b.train_logliks)


def test_select_rank_rejects_empty_candidates():
    x, y = _supervised_rank_one(noise=0.2)
    with pytest.raises(ValueError):
        select_rank(x, y, [], FitConfig(rank=1))
