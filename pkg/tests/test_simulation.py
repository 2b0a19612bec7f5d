import warnings

import numpy as np
import pytest

from supcp.model import FitConfig, SupCpParams
from supcp.simulation import (
    generate_init_sim,
    generate_rank_sim,
    generate_setting,
    principal_angle,
    relative_errors,
    run_benchmark,
    run_init_study,
    signal_error,
)
from supcp.tensor import cp_compose, frobenius_distance, unfold


def test_setting1_truth_values():
    x, y, truth = generate_setting(1, seed=0)
    assert x.shape == (100, 10, 10)
    assert y.shape == (100, 10)
    assert np.array_equal(np.diag(truth.sigma_f), [100.0, 64.0, 36.0, 16.0, 4.0])
    assert truth.sigma_e2 == 1.0
    assert np.array_equal(truth.b, np.zeros((10, 5)))
    for v in truth.loadings:
        assert np.allclose(v.T @ v, np.eye(5), atol=1e-12)


def test_setting2_collinearity_and_snr():
    for seed in range(3):
        x, y, truth = generate_setting(2, seed=seed)
        assert np.array_equal(np.diag(truth.sigma_f), [25.0, 16.0, 9.0, 4.0, 1.0])
        for v in truth.loadings:
            # unit columns, so the gram holds the pairwise cosines
            cos = v.T @ v
            off = cos[~np.eye(5, dtype=bool)]
            assert np.all(off >= 0.9 - 1e-12)
        f = truth.u - y @ truth.b
        ratio = np.linalg.norm(y @ truth.b) / np.linalg.norm(f)
        assert 0.8 <= ratio <= 1.25


def test_setting3_truth_values():
    x, y, truth = generate_setting(3, seed=1)
    assert np.array_equal(truth.sigma_f, np.zeros((5, 5)))
    assert truth.sigma_e2 == 6.0
    assert np.array_equal(truth.u, y @ truth.b)
    for v in truth.loadings:
        assert np.allclose(v.T @ v, np.eye(5), atol=1e-12)


def test_setting4_dimensions():
    x, y, truth = generate_setting(4, seed=2)
    assert x.shape == (100, 50, 50)
    assert truth.sigma_e2 == 0.5
    assert np.array_equal(np.diag(truth.sigma_f), [25.0, 16.0, 9.0, 4.0, 1.0])


def test_setting_signal_matches_compose():
    for setting in (1, 2, 3, 4):
        _, _, truth = generate_setting(setting, seed=3)
        assert frobenius_distance(
            truth.signal, cp_compose(truth.u, truth.loadings)
        ) == 0.0


def test_setting_deterministic():
    xa, ya, ta = generate_setting(2, seed=9)
    xb, yb, tb = generate_setting(2, seed=9)
    assert np.array_equal(xa, xb)
    assert np.array_equal(ya, yb)
    assert np.array_equal(ta.u, tb.u)


def test_setting_rejects_unknown():
    with pytest.raises(ValueError):
        generate_setting(5, seed=0)


def test_rank_sim_truth_properties():
    x, y, truth = generate_rank_sim(4, seed=0)
    assert x.shape == (100, 25, 25)
    assert y.shape == (100, 10)
    diag = np.diag(truth.sigma_f)
    assert diag.shape == (4,)
    assert np.all((diag >= 5.0) & (diag <= 25.0))
    for v in truth.loadings:
        assert np.allclose(v.T @ v, np.eye(4), atol=1e-12)


def test_rank_sim_rank_one_dominates():
    x, _, _ = generate_rank_sim(1, seed=5)
    s = np.linalg.svd(unfold(x, 0), compute_uv=False)
    assert s[0] > 1.5 * s[1]


def test_rank_sim_bounds():
    with pytest.raises(ValueError):
        generate_rank_sim(0, seed=0)
    with pytest.raises(ValueError):
        generate_rank_sim(11, seed=0)


def test_init_sim_shapes_and_loadings():
    x, y, truth = generate_init_sim(seed=0)
    assert x.shape == (10, 20, 40, 50)
    assert y.shape == (10,)
    assert truth.u.shape == (10, 2)
    for v in truth.loadings:
        assert np.allclose(np.linalg.norm(v, axis=0), 1.0, atol=1e-12)


def test_init_sim_covariate_tracks_first_component():
    corrs = []
    for seed in range(20):
        _, y, truth = generate_init_sim(seed=seed)
        corrs.append(np.corrcoef(y, truth.u[:, 0])[0, 1])
    assert np.median(corrs) > 0.7


def test_signal_error_basics():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((4, 3, 2))
    assert signal_error(a, a) == 0.0
    b = rng.standard_normal((4, 3, 2))
    se = signal_error(a, b)
    assert se**2 <= 2 * np.linalg.norm(a) ** 2 + 2 * np.linalg.norm(b) ** 2


def test_principal_angle_reference_cases():
    e1 = np.array([[1.0], [0.0]])
    e2 = np.array([[0.0], [1.0]])
    mixed = np.array([[1.0], [1.0]]) / np.sqrt(2)
    assert principal_angle(e1, e1) == pytest.approx(0.0, abs=1e-10)
    assert principal_angle(e1, e2) == pytest.approx(90.0, abs=1e-10)
    assert principal_angle(e1, mixed) == pytest.approx(45.0, abs=1e-10)


def test_principal_angle_rejects_degenerate_input():
    with pytest.raises(ValueError):
        principal_angle(np.zeros((3, 1)), np.ones((3, 1)))
    with pytest.raises(ValueError):
        principal_angle(np.ones((3, 1)), np.ones((4, 1)))


def test_relative_errors_exact_recovery():
    _, _, truth = generate_setting(1, seed=4)
    params = SupCpParams(
        [v.copy() for v in truth.loadings],
        truth.b.copy(),
        truth.sigma_f.copy(),
        truth.sigma_e2,
    )
    re_e, re_f, b_err = relative_errors(params, truth)
    assert re_e == 0.0
    assert re_f == 0.0
    assert b_err == 0.0


def test_relative_errors_invariant_to_permutation_and_sign():
    _, _, truth = generate_setting(2, seed=6)
    perm = [3, 0, 4, 1, 2]
    signs = np.array([1.0, -1.0, 1.0, -1.0, -1.0])
    loadings = []
    for k, v in enumerate(truth.loadings):
        w = v[:, perm].copy()
        if k == 0:
            w = w * signs
        loadings.append(w)
    b = (truth.b[:, perm] * signs).copy()
    sf = np.diag(np.diag(truth.sigma_f)[perm])
    params = SupCpParams(loadings, b, sf, truth.sigma_e2)
    re_e, re_f, b_err = relative_errors(params, truth)
    assert re_e == pytest.approx(0.0, abs=1e-12)
    assert re_f == pytest.approx(0.0, abs=1e-10)
    assert b_err == pytest.approx(0.0, abs=1e-10)


def test_relative_errors_sigma_f_zero_reports_nan():
    _, _, truth = generate_setting(3, seed=7)
    params = SupCpParams(
        [v.copy() for v in truth.loadings], truth.b.copy(),
        np.eye(5) * 0.1, truth.sigma_e2,
    )
    _, re_f, _ = relative_errors(params, truth)
    assert np.isnan(re_f)


def test_run_benchmark_structure_and_determinism():
    config = FitConfig(rank=5, max_iters=30, anneal_iters=4, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows_a, info_a = run_benchmark(
            1, n_runs=2, methods=("supcp", "cp"), seed=3, fit_config=config
        )
        rows_b, _ = run_benchmark(
            1, n_runs=2, methods=("supcp", "cp"), seed=3, fit_config=config
        )
    by_method = {}
    for row in rows_a:
        by_method.setdefault(row.method, []).append(row.metric)
    assert set(by_method) == {"supcp", "cp"}
    assert "se" in by_method["supcp"] and "re_e" in by_method["supcp"]
    assert "se" in by_method["cp"] and "re_e" not in by_method["cp"]
    assert info_a["failures"] == {"supcp": 0, "cp": 0}
    for ra, rb in zip(rows_a, rows_b):
        assert (ra.method, ra.metric) == (rb.method, rb.metric)
        if ra.metric != "time_s":
            assert ra.median == rb.median
            assert ra.mad == rb.mad


def test_run_benchmark_single_run_has_zero_mad():
    config = FitConfig(rank=5, max_iters=20, anneal_iters=3, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows, _ = run_benchmark(1, n_runs=1, methods=("cp",), seed=0, fit_config=config)
    assert all(row.mad == 0.0 for row in rows)
    assert all(row.n_runs == 1 for row in rows)


def test_run_init_study_smoke_and_determinism():
    variants = (("random", 0), ("random", 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows_a = run_init_study(n_datasets=1, seed=2, variants=variants, max_iters=25)
        rows_b = run_init_study(n_datasets=1, seed=2, variants=variants, max_iters=25)
    assert [(r.init_method, r.anneal_iters) for r in rows_a] == list(variants)
    for ra, rb in zip(rows_a, rows_b):
        assert ra.mean_loglik == rb.mean_loglik
        assert ra.mean_abs_diff == rb.mean_abs_diff
        assert ra.n_datasets == 1
        assert ra.mean_abs_diff >= 0.0
