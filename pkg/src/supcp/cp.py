"""Least-squares CP decomposition by alternating least squares."""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .tensor import cp_compose, frobenius_distance, mttkrp
from .validation import check_multiway

__all__ = ["CpFit", "cp_als", "CPDecomposition"]

# Relative ridge added to singular normal equations.
JITTER = 1e-12


@dataclass
class CpFit:
    """Result of an ALS fit.

    ``u`` carries the component scales; ``loadings`` have unit-norm columns
    with positive leading sign, and components are ordered by decreasing
    score-column norm.  ``rss`` is the exact squared Frobenius residual of the
    returned factorization.
    """

    u: np.ndarray
    loadings: list
    rss: float
    n_iters: int
    converged: bool
    rss_trace: np.ndarray = field(repr=False, default=None)
    diagnostics: list = field(default_factory=list)

    @property
    def rank(self):
        return self.u.shape[1]


def cp_als(x, rank, max_iters=500, tol=1e-8, seed=0):
    """Fit a rank-``rank`` CP decomposition of ``x`` by ALS.

    Parameters
    ----------
    x : ndarray, order >= 2
        Data array, samples along mode 0.
    rank : int
        Number of components.
    max_iters : int
        Maximum number of full ALS sweeps.
    tol : float
        Stop when the relative decrease of the residual sum of squares over
        one sweep falls below ``tol``.
    seed : int
        Seed for the standard-normal factor initialization.

    Returns
    -------
    CpFit
    """
    x = check_multiway(x, min_order=2)
    rank = int(rank)
    if rank < 1:
        raise ValueError("rank must be >= 1")
    dims = x.shape
    n_modes = x.ndim
    max_rank = min(
        int(np.prod([d for j, d in enumerate(dims) if j != k])) for k in range(n_modes)
    )
    if rank > max_rank:
        raise ValueError(
            f"rank {rank} exceeds the maximal unfolding rank {max_rank} for shape {dims}"
        )

    rng = np.random.default_rng(seed)
    mats = [rng.standard_normal((d, rank)) for d in dims]
    diagnostics = []

    x_norm2 = float(np.vdot(x, x))
    if x_norm2 == 0.0:
        # degenerate all-zero input: zero scores, arbitrary normalized loadings
        factors = [_unit_columns(m) for m in mats[1:]]
        u = np.zeros((dims[0], rank))
        u, factors = _finalize(u, factors)
        return CpFit(u, factors, 0.0, 0, True, np.zeros(0), diagnostics)

    rss_prev = None
    trace = []
    n_iters = 0
    converged = False
    for sweep in range(1, max_iters + 1):
        n_iters = sweep
        for k in range(n_modes):
            others = [mats[j] for j in range(n_modes) if j != k]
            gram = _hadamard_grams(others)
            m = mttkrp(x, others, k)
            mats[k] = _solve_normal(m, gram, diagnostics, f"sweep {sweep} mode {k}")
        # pull scale into the score mode to keep loading Grams well-scaled
        for k in range(1, n_modes):
            norms = np.linalg.norm(mats[k], axis=0)
            norms[norms == 0.0] = 1.0
            mats[k] /= norms
            mats[0] *= norms
        gram = _hadamard_grams(mats[1:])
        m = mttkrp(x, mats[1:], 0)
        rss = x_norm2 - 2.0 * float(np.sum(m * mats[0])) + float(
            np.sum(gram * (mats[0].T @ mats[0]))
        )
        rss = max(rss, 0.0)
        trace.append(rss)
        if rss_prev is not None:
            if rss_prev <= 0.0 or (rss_prev - rss) / rss_prev < tol:
                converged = True
                break
        rss_prev = rss

    u, factors = _finalize(mats[0], mats[1:])
    rss_exact = frobenius_distance(x, cp_compose(u, factors)) ** 2
    return CpFit(u, factors, rss_exact, n_iters, converged, np.asarray(trace), diagnostics)


def _hadamard_grams(mats):
    rank = mats[0].shape[1]
    gram = np.ones((rank, rank))
    for m in mats:
        gram *= m.T @ m
    return gram


def _solve_normal(m, gram, diagnostics, where):
    """Solve factor @ gram = m for the factor, ridging if gram is singular."""
    try:
        c = cho_factor(gram, lower=True)
    except np.linalg.LinAlgError:
        ridge = JITTER * max(np.trace(gram), 1.0)
        diagnostics.append(f"singular normal equations at {where}: ridge {ridge:.3e}")
        gram = gram + ridge * np.eye(gram.shape[0])
        c = cho_factor(gram, lower=True)
    return cho_solve(c, m.T).T


def _unit_columns(m):
    norms = np.linalg.norm(m, axis=0)
    norms[norms == 0.0] = 1.0
    return m / norms


def _finalize(u, factors):
    """Absorb loading scales/signs into u, fix leading signs, order components
    by decreasing score norm."""
    u = u.copy()
    factors = [f.copy() for f in factors]
    rank = u.shape[1]
    for f in factors:
        norms = np.linalg.norm(f, axis=0)
        safe = np.where(norms == 0.0, 1.0, norms)
        f /= safe
        u *= norms
        for r in range(rank):
            s = _leading_sign(f[:, r])
            f[:, r] *= s
            u[:, r] *= s
    order = np.argsort(-np.linalg.norm(u, axis=0), kind="stable")
    u = u[:, order]
    factors = [f[:, order] for f in factors]
    return u, factors


def _leading_sign(v):
    nz = np.nonzero(v)[0]
    if nz.size == 0:
        return 1.0
    return 1.0 if v[nz[0]] > 0 else -1.0


class CPDecomposition(BaseEstimator):
    """Least-squares CP decomposition with an estimator interface.

    Parameters mirror :func:`cp_als`; fitted state lands in ``scores_``,
    ``loadings_``, ``rss_``, ``n_iter_`` and ``converged_``.
    """

    def __init__(self, rank=2, max_iter=500, tol=1e-8, random_state=0):
        self.rank = rank
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        result = cp_als(
            X, self.rank, max_iters=self.max_iter, tol=self.tol, seed=self.random_state
        )
        self.scores_ = result.u
        self.loadings_ = result.loadings
        self.rss_ = result.rss
        self.n_iter_ = result.n_iters
        self.converged_ = result.converged
        self.result_ = result
        return self

    def reconstruct(self):
        """Fitted signal array ``[[scores_, loadings_]]``."""
        if not hasattr(self, "scores_"):
            raise NotFittedError("CPDecomposition is not fitted yet")
        return cp_compose(self.scores_, self.loadings_)
