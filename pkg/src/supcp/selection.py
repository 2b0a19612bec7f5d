"""Rank selection by likelihood cross-validation."""

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .model import NumericalError, fit_supcp, marginal_loglik
from .validation import check_matrix, check_multiway

__all__ = [
    "RankSelectionReport",
    "split_indices",
    "train_test_split",
    "test_loglik",
    "select_rank",
]


@dataclass
class RankSelectionReport:
    candidate_ranks: list
    test_logliks: np.ndarray
    train_logliks: np.ndarray
    chosen_rank: int
    split_seed: int
    train_fraction: float


def split_indices(n, train_fraction, seed):
    """Deterministic uniform partition of range(n); both blocks sorted."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    n_train = int(round(train_fraction * n))
    n_test = n - n_train
    if n_train < 2 or n_test < 2:
        raise ValueError(
            f"split {n_train}/{n_test} too small: both blocks need at least 2 samples"
        )
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def train_test_split(x, y, train_fraction=0.5, seed=0):
    """Partition samples into ``((x_train, y_train), (x_test, y_test))``.

    The partition is uniform without replacement and deterministic per seed.
    Data are returned raw; training-set centering happens inside the fit and
    is applied to held-out data by :func:`test_loglik`.
    """
    x = check_multiway(x, min_order=2)
    if y is not None:
        y = check_matrix(y, "y")
        if y.shape[0] != x.shape[0]:
            raise ValueError(f"x has {x.shape[0]} samples but y has {y.shape[0]} rows")
    idx_train, idx_test = split_indices(x.shape[0], train_fraction, seed)
    y_train = None if y is None else y[idx_train]
    y_test = None if y is None else y[idx_test]
    return (x[idx_train], y_train), (x[idx_test], y_test)


def test_loglik(x_test, y_test, fit_result):
    """Held-out marginal log-likelihood under a fitted model.

    The training-set centering stored on ``fit_result`` is applied to the raw
    held-out block before evaluation.
    """
    x_test = check_multiway(x_test, min_order=2)
    xc = x_test - fit_result.x_mean
    yc = None
    if y_test is not None and fit_result.y_mean is not None:
        yc = check_matrix(y_test, "y_test") - fit_result.y_mean
    return marginal_loglik(xc, yc, fit_result.params)


def select_rank(
    x,
    y,
    candidate_ranks,
    config,
    train_fraction=0.5,
    split_seed=0,
    seeds=None,
    n_jobs=1,
):
    """Choose the rank maximizing held-out log-likelihood.

    Each candidate rank is fitted on the training block (sharing one
    multi-start seed list when ``seeds`` is given) and scored on the test
    block.  Failed fits are recorded as NaN and skipped in the selection;
    if every candidate fails, a NumericalError is raised.
    """
    candidate_ranks = [int(r) for r in candidate_ranks]
    if not candidate_ranks:
        raise ValueError("candidate_ranks must be nonempty")
    if any(r < 1 for r in candidate_ranks):
        raise ValueError("candidate ranks must be >= 1")
    (x_tr, y_tr), (x_te, y_te) = train_test_split(x, y, train_fraction, split_seed)

    def one_rank(rank):
        cfg = replace(config, rank=rank)
        try:
            result = fit_supcp(x_tr, y_tr, cfg, seeds=seeds)
            return result.loglik, test_loglik(x_te, y_te, result)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            warnings.warn(f"rank {rank} fit failed: {exc}", RuntimeWarning)
            return np.nan, np.nan

    if n_jobs != 1 and len(candidate_ranks) > 1:
        from joblib import Parallel, delayed

        pairs = Parallel(n_jobs=n_jobs)(delayed(one_rank)(r) for r in candidate_ranks)
    else:
        pairs = [one_rank(r) for r in candidate_ranks]
    train_lls = np.array([p[0] for p in pairs])
    test_lls = np.array([p[1] for p in pairs])
    if not np.any(np.isfinite(test_lls)):
        raise NumericalError("every candidate rank failed to fit")
    best = int(np.nanargmax(test_lls))
    return RankSelectionReport(
        candidate_ranks=candidate_ranks,
        test_logliks=test_lls,
        train_logliks=train_lls,
        chosen_rank=candidate_ranks[best],
        split_seed=split_seed,
        train_fraction=train_fraction,
    )
