"""Supervised probabilistic CP model: likelihood, EM estimation, diagnostics.

The observed (K+1)-way array ``x`` (samples along mode 0) decomposes as
``[[U, V_1, ..., V_K]] + E`` with latent scores ``U = Y B + F``, score noise
rows ``F ~ N(0, Sigma_f)`` and entry noise ``E ~ N(0, sigma_e2)``.  Unfolded
along the sample mode the rows of ``unfold(x, 0)`` are independent
``N(B' y_i  through Vmat, Sigma_X)`` with
``Sigma_X = Vmat Sigma_f Vmat' + sigma_e2 I``.

All likelihood and posterior computations stay in O(n d R + R^3) through the
Woodbury identity applied with a symmetric square root of Sigma_f, so an
exactly singular Sigma_f is handled without special cases.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .cp import cp_als
from .tensor import RANK_RTOL, cp_compose, k_rank, mttkrp, unfold, vmat
from .validation import check_matrix, check_multiway, check_vector

__all__ = [
    "SupCpParams",
    "EStepResult",
    "FitConfig",
    "FitResult",
    "NumericalError",
    "marginal_loglik",
    "initialize",
    "e_step",
    "m_step_loadings",
    "m_step_regression",
    "normalize_params",
    "fit_supcp",
    "identifiability_check",
    "conditional_mean",
    "SupCP",
]

# Floors shared by the EM updates: eigenvalues of Sigma_f below EIG_FLOOR are
# clamped before inversion, and a nonpositive sigma_e2 update is raised to
# VAR_FLOOR.  Both per the estimation contract.
EIG_FLOOR = 1e-12
VAR_FLOOR = 1e-12
JITTER = 1e-12


class NumericalError(RuntimeError):
    """EM produced a non-finite likelihood or an unrecoverable linear system."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class SupCpParams:
    """Model parameters.

    ``loadings`` holds one d_k x R matrix per data mode; ``b`` is the q x R
    coefficient matrix (q may be 0 for an unsupervised model); ``sigma_f`` is
    the R x R score covariance (diagonal when ``diag_sigma_f``); ``sigma_e2``
    the entry-noise variance.
    """

    loadings: list
    b: np.ndarray
    sigma_f: np.ndarray
    sigma_e2: float
    diag_sigma_f: bool = True

    @property
    def rank(self):
        return self.loadings[0].shape[1]

    @property
    def n_modes(self):
        return len(self.loadings)

    @property
    def dims(self):
        return tuple(v.shape[0] for v in self.loadings)


@dataclass
class EStepResult:
    """Posterior moments of the latent scores: mean rows ``u_hat`` and the
    covariance ``sigma_u`` shared across samples."""

    u_hat: np.ndarray
    sigma_u: np.ndarray


@dataclass
class FitConfig:
    rank: int
    max_iters: int = 1000
    tol: float = 1e-8
    anneal_iters: int = 100
    init_method: str = "random"
    seed: int = 0
    diag_sigma_f: bool = True


@dataclass
class FitResult:
    params: SupCpParams
    e_step: EStepResult
    loglik_trace: np.ndarray
    converged: bool
    n_iters: int
    x_mean: np.ndarray = None
    y_mean: np.ndarray = None
    config: FitConfig = None

    @property
    def loglik(self):
        return float(self.loglik_trace[-1])


def validate_params(params, dims=None):
    """Check structural validity: shapes, PSD sigma_f, positive sigma_e2.

    Normalization restrictions are deliberately not enforced here; the
    likelihood is well defined for unnormalized parameter points.
    """
    if len(params.loadings) == 0:
        raise ValueError("params must carry at least one loading matrix")
    rank = params.loadings[0].shape[1]
    for k, v in enumerate(params.loadings):
        check_matrix(v, f"loadings[{k}]")
        if v.shape[1] != rank:
            raise ValueError("loading matrices disagree on the component count")
    if dims is not None and tuple(params.dims) != tuple(dims):
        raise ValueError(f"loadings cover dims {params.dims}, data has {tuple(dims)}")
    b = np.asarray(params.b, dtype=float)
    if b.ndim != 2 or b.shape[1] != rank:
        raise ValueError(f"b must be q x {rank}, got {b.shape}")
    sf = np.asarray(params.sigma_f, dtype=float)
    if sf.shape != (rank, rank):
        raise ValueError(f"sigma_f must be {rank} x {rank}, got {sf.shape}")
    if not np.allclose(sf, sf.T, atol=1e-8):
        raise ValueError("sigma_f must be symmetric")
    w = np.linalg.eigvalsh((sf + sf.T) / 2.0)
    if w.min() < -1e-10:
        raise ValueError(f"sigma_f is not positive semidefinite (min eigenvalue {w.min():.3e})")
    if not np.isfinite(params.sigma_e2) or params.sigma_e2 <= 0.0:
        raise ValueError(f"sigma_e2 must be positive, got {params.sigma_e2}")
    return params


def _loading_gram(loadings):
    """Gram of the Khatri-Rao structure matrix: Hadamard product of the
    per-mode Grams."""
    rank = loadings[0].shape[1]
    g = np.ones((rank, rank))
    for v in loadings:
        g *= v.T @ v
    return g


def _sym_sqrt(sigma_f):
    w, q = np.linalg.eigh((sigma_f + sigma_f.T) / 2.0)
    w = np.clip(w, 0.0, None)
    return (q * np.sqrt(w)) @ q.T


def _pinv_floored(sigma_f):
    """Spectral inverse of sigma_f with eigenvalues clamped at EIG_FLOOR."""
    w, q = np.linalg.eigh((sigma_f + sigma_f.T) / 2.0)
    if w.min() < EIG_FLOOR:
        warnings.warn(
            "sigma_f is singular to working precision; flooring eigenvalues at "
            f"{EIG_FLOOR:g} (degenerate score covariance)",
            RuntimeWarning,
            stacklevel=3,
        )
        w = np.maximum(w, EIG_FLOOR)
    return (q / w) @ q.T


def _as_covariates(y):
    """Coerce covariates to an n x q matrix; a 1-D vector is one covariate."""
    if y is None:
        return None
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    return check_matrix(y, "y")


def _score_mean(y, b):
    """Prior score means Y B, or None when there is no covariate effect."""
    if y is None or b.shape[0] == 0:
        return None
    m = y @ b
    if not m.any():
        return None
    return m


def _loglik_unfolded(x1, score_mean, params):
    """Marginal log-likelihood from the precomputed sample-mode unfolding."""
    n, d = x1.shape
    vm = vmat(params.loadings)
    g = _loading_gram(params.loadings)
    s2 = params.sigma_e2
    resid = x1 if score_mean is None else x1 - score_mean @ vm.T
    rank = g.shape[0]
    s_half = _sym_sqrt(params.sigma_f)
    a = np.eye(rank) + s_half @ g @ s_half / s2
    chol = np.linalg.cholesky(a)
    logdet = d * np.log(s2) + 2.0 * float(np.sum(np.log(np.diag(chol))))
    w = (resid @ vm) @ s_half
    z = solve_triangular(chol, w.T, lower=True)
    quad = (float(np.vdot(resid, resid)) - float(np.vdot(z, z)) / s2) / s2
    return -0.5 * (n * d * np.log(2.0 * np.pi) + n * logdet + quad)


def marginal_loglik(x, y, params):
    """Exact marginal log-likelihood of ``x`` (constant included).

    Rows of ``unfold(x, 0)`` are modeled as independent
    ``N(Vmat B' y_i, Vmat Sigma_f Vmat' + sigma_e2 I)``.  Evaluated through
    the Woodbury identity and the matrix determinant lemma, O(ndR + R^3).

    ``y`` may be None for a model without covariates.
    """
    x = check_multiway(x, min_order=2)
    validate_params(params, dims=x.shape[1:])
    x1 = unfold(x, 0)
    y = _as_covariates(y)
    if y is not None:
        _check_sample_shapes(x, y, params)
    return float(_loglik_unfolded(x1, _score_mean(y, params.b), params))


def _check_sample_shapes(x, y, params):
    if y.shape[0] != x.shape[0]:
        raise ValueError(f"x has {x.shape[0]} samples but y has {y.shape[0]} rows")
    if params.b.shape[0] not in (0, y.shape[1]):
        raise ValueError(f"y has {y.shape[1]} covariates but b expects {params.b.shape[0]}")


def _e_step_unfolded(x1, score_mean, params):
    rank = params.rank
    g = _loading_gram(params.loadings)
    s2 = params.sigma_e2
    sf_inv = _pinv_floored(params.sigma_f)
    system = g + s2 * sf_inv
    chol = cho_factor(system, lower=True)
    rhs = x1 @ vmat(params.loadings)
    if score_mean is not None:
        rhs = rhs + s2 * (score_mean @ sf_inv)
    u_hat = cho_solve(chol, rhs.T).T
    sigma_u = s2 * cho_solve(chol, np.eye(rank))
    sigma_u = (sigma_u + sigma_u.T) / 2.0
    return EStepResult(u_hat, sigma_u)


def e_step(x, y, params):
    """Posterior mean and covariance of the latent scores.

    ``sigma_u = (Vmat'Vmat / sigma_e2 + Sigma_f^-1)^-1`` and
    ``u_hat = (unfold(x,0) Vmat + sigma_e2 Y B Sigma_f^-1)
    (Vmat'Vmat + sigma_e2 Sigma_f^-1)^-1``; a singular ``sigma_f`` is
    inverted spectrally with its eigenvalues floored at 1e-12 (warns).
    """
    x = check_multiway(x, min_order=2)
    validate_params(params, dims=x.shape[1:])
    y = _as_covariates(y)
    if y is not None:
        _check_sample_shapes(x, y, params)
    return _e_step_unfolded(unfold(x, 0), _score_mean(y, params.b), params)


def _m_step_loadings_tensor(x, est, loadings):
    """One Gauss-Seidel sweep over the loading matrices (ascending modes),
    returning unnormalized updates."""
    u, su = est.u_hat, est.sigma_u
    n = u.shape[0]
    moment = u.T @ u + n * su
    new = [v.copy() for v in loadings]
    for k in range(len(new)):
        others = [v for j, v in enumerate(new) if j != k]
        gram = moment.copy()
        for v in others:
            gram *= v.T @ v
        target = mttkrp(x, [u] + others, k + 1)
        new[k] = _solve_spd(gram, target, f"loading mode {k}")
    return new


def _solve_spd(gram, target, where):
    try:
        chol = cho_factor(gram, lower=True)
    except np.linalg.LinAlgError:
        ridge = JITTER * max(float(np.trace(gram)), 1.0)
        warnings.warn(
            f"singular normal equations for {where}; adding ridge {ridge:.3e}",
            RuntimeWarning,
            stacklevel=3,
        )
        chol = cho_factor(gram + ridge * np.eye(gram.shape[0]), lower=True)
    return cho_solve(chol, target.T).T


def m_step_loadings(x, est, params):
    """Update every loading matrix given posterior score moments.

    Mode k solves ``V_k ((prod_{j != k} V_j'V_j) o (U'U + n Sigma_u)) =
    mttkrp(x, [U, V_j != k], k)`` with already-updated earlier modes
    (ascending sweep).  Returns the unnormalized loading list.
    """
    x = check_multiway(x, min_order=2)
    validate_params(params, dims=x.shape[1:])
    return _m_step_loadings_tensor(x, est, params.loadings)


def _ols_coefficients(y, u):
    """B = (Y'Y)^-1 Y'U with a collinearity guard; zero Y means no effect."""
    q = y.shape[1]
    gram = y.T @ y
    rank = np.linalg.matrix_rank(gram, tol=None, hermitian=True)
    if rank < q:
        raise ValueError(
            "covariate matrix is rank deficient; remove collinear covariates"
        )
    chol = cho_factor(gram, lower=True)
    return cho_solve(chol, y.T @ u)


def _m_step_regression_tensor(x, x_norm2, y, est, loadings, diag_sigma_f):
    u, su = est.u_hat, est.sigma_u
    n, rank = u.shape
    d = int(np.prod([v.shape[0] for v in loadings]))
    if y is None or not y.any():
        q = 0 if y is None else y.shape[1]
        b = np.zeros((q, rank))
        score_resid = u
    else:
        b = _ols_coefficients(y, u)
        score_resid = u - y @ b
    sigma_f = score_resid.T @ score_resid / n + su
    sigma_f = (sigma_f + sigma_f.T) / 2.0
    if diag_sigma_f:
        sigma_f = np.diag(np.diag(sigma_f))
    g = _loading_gram(loadings)
    xv = mttkrp(x, loadings, 0)
    num = (
        x_norm2
        - 2.0 * float(np.vdot(xv, u))
        + n * float(np.vdot(g, su))
        + float(np.vdot(u @ g, u))
    )
    sigma_e2 = num / (n * d)
    if sigma_e2 <= 0.0:
        warnings.warn(
            f"noise-variance update nonpositive ({sigma_e2:.3e}); flooring at {VAR_FLOOR:g}",
            RuntimeWarning,
            stacklevel=3,
        )
        sigma_e2 = VAR_FLOOR
    return b, sigma_f, sigma_e2


def m_step_regression(x, y, est, params):
    """Update (B, Sigma_f, sigma_e2) given posterior moments and the freshly
    updated (possibly unnormalized) loadings carried by ``params``.

    B is the least-squares regression of the posterior score means on the
    covariates (zero when there is no covariate effect); Sigma_f is the
    posterior-expected score residual covariance; sigma_e2 the
    posterior-expected mean squared entry residual.
    """
    x = check_multiway(x, min_order=2)
    y = _as_covariates(y)
    x1_norm2 = float(np.vdot(x, x))
    return _m_step_regression_tensor(x, x1_norm2, y, est, params.loadings, params.diag_sigma_f)


def normalize_params(loadings, b, sigma_f, sigma_e2, diag_sigma_f=True):
    """Rescale to restriction (a) and reorder to restriction (b).

    Every loading column is normalized to unit length with a positive leading
    entry; the signed scale of component r (product of column norms and sign
    flips across modes) moves into B's column r and two-sidedly into Sigma_f.
    Components are then permuted so diag(Sigma_f) is nonincreasing.  The
    represented model, and hence the likelihood, is unchanged.
    """
    loadings = [check_matrix(v, f"loadings[{k}]").copy() for k, v in enumerate(loadings)]
    rank = loadings[0].shape[1]
    b = np.asarray(b, dtype=float).copy()
    sigma_f = np.asarray(sigma_f, dtype=float).copy()
    signed_scale = np.ones(rank)
    for k, v in enumerate(loadings):
        norms = np.linalg.norm(v, axis=0)
        if np.any(norms == 0.0):
            dead = int(np.argmin(norms))
            raise ValueError(
                f"component {dead} has a zero loading column in mode {k}: "
                "degenerate component, refit with a lower rank"
            )
        v /= norms
        signs = np.array([_leading_sign(v[:, r]) for r in range(rank)])
        v *= signs
        signed_scale *= norms * signs
    if b.shape[0] > 0:
        b *= signed_scale
    sigma_f = sigma_f * np.outer(signed_scale, signed_scale)
    order = np.argsort(-np.diag(sigma_f), kind="stable")
    loadings = [v[:, order] for v in loadings]
    if b.shape[0] > 0:
        b = b[:, order]
    sigma_f = sigma_f[np.ix_(order, order)]
    sigma_f = (sigma_f + sigma_f.T) / 2.0
    return SupCpParams(loadings, b, sigma_f, float(sigma_e2), diag_sigma_f)


def _leading_sign(v):
    nz = np.nonzero(v)[0]
    if nz.size == 0:
        return 1.0
    return 1.0 if v[nz[0]] > 0 else -1.0


def initialize(x, y, config):
    """Starting point for the EM iteration.

    random: unit-normalized standard-normal loadings, scores by projection
    ``unfold(x,0) Vmat``.  cp: scores and loadings from an ALS fit.  Either
    way B comes from least squares of the scores on the covariates, sigma_f
    from the diagonal score-residual covariance and sigma_e2 from the sample
    variance of the reconstruction residual (may be 0 on noiseless data; the
    fit loop floors it).

    Returns ``(params, u_init)`` with the score matrix that seeded the
    regression quantities.
    """
    x = check_multiway(x, min_order=2)
    y = _as_covariates(y)
    if y is not None and y.shape[0] != x.shape[0]:
        raise ValueError(f"x has {x.shape[0]} samples but y has {y.shape[0]} rows")
    rank = int(config.rank)
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if config.init_method == "random":
        rng = np.random.default_rng(config.seed)
        loadings = []
        for d in x.shape[1:]:
            v = rng.standard_normal((d, rank))
            v /= np.linalg.norm(v, axis=0)
            loadings.append(v)
        u = unfold(x, 0) @ vmat(loadings)
    elif config.init_method == "cp":
        als = cp_als(x, rank, seed=config.seed)
        u, loadings = als.u, als.loadings
    else:
        raise ValueError(f"unknown init_method {config.init_method!r}")
    n = x.shape[0]
    if y is None or not y.any():
        q = 0 if y is None else y.shape[1]
        b = np.zeros((q, rank))
        score_resid = u
    else:
        b = _ols_coefficients(y, u)
        score_resid = u - y @ b
    sigma_f = np.diag(np.diag(score_resid.T @ score_resid) / n)
    resid = x - cp_compose(u, loadings)
    sigma_e2 = float(np.var(resid, ddof=1))
    params = SupCpParams(loadings, b, sigma_f, sigma_e2, config.diag_sigma_f)
    return params, u


def fit_supcp(x, y=None, config=None, seeds=None, n_jobs=1):
    """Maximum-likelihood EM fit.

    ``x`` is centered internally across samples and ``y`` by column means;
    the means are stored on the result.  Each iteration runs E-step,
    annealing noise on the score means (first ``anneal_iters`` iterations,
    scale ``sigma_e_hat / iteration``), the two M-step blocks, normalization
    and a likelihood evaluation; stops on relative likelihood change < tol
    once past the annealing phase.

    ``seeds`` runs one fit per seed and returns the highest-likelihood one
    (``n_jobs`` parallelizes the starts).
    """
    if config is None:
        raise ValueError("config is required")
    if config.max_iters <= config.anneal_iters:
        raise ValueError("max_iters must exceed anneal_iters")
    if config.tol <= 0.0:
        raise ValueError("tol must be positive")
    x = check_multiway(x, min_order=2)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples")
    y = _as_covariates(y)
    if y is not None and y.shape[0] != n:
        raise ValueError(f"x has {n} samples but y has {y.shape[0]} rows")

    x_mean = x.mean(axis=0)
    xc = x - x_mean
    if y is not None:
        y_mean = y.mean(axis=0)
        yc = y - y_mean
    else:
        y_mean = None
        yc = None

    if seeds is not None:
        candidates = [replace(config, seed=int(s)) for s in seeds]
        if not candidates:
            raise ValueError("seeds must be nonempty when given")
        if n_jobs != 1 and len(candidates) > 1:
            from joblib import Parallel, delayed

            runs = Parallel(n_jobs=n_jobs)(
                delayed(_fit_centered_safe)(xc, yc, cfg) for cfg in candidates
            )
        else:
            runs = [_fit_centered_safe(xc, yc, cfg) for cfg in candidates]
        results = [r for r in runs if isinstance(r, FitResult)]
        if not results:
            raise NumericalError(f"all {len(candidates)} starts failed: {runs[0]}")
        if len(results) < len(candidates):
            warnings.warn(
                f"{len(candidates) - len(results)} of {len(candidates)} starts failed",
                RuntimeWarning,
            )
        best = max(results, key=lambda r: r.loglik)
    else:
        best = _fit_centered(xc, yc, config)
    best.x_mean = x_mean
    best.y_mean = y_mean
    return best


def _fit_centered_safe(xc, yc, config):
    try:
        return _fit_centered(xc, yc, config)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        return exc


def _fit_centered(xc, yc, config):
    """EM loop on already-centered data."""
    rng = np.random.default_rng(config.seed)
    params, _ = initialize(xc, yc, config)
    params.sigma_e2 = max(params.sigma_e2, VAR_FLOOR)
    x1 = unfold(xc, 0)
    x_norm2 = float(np.vdot(x1, x1))
    trace = []
    converged = False
    est = None
    n_iters = 0
    for it in range(1, config.max_iters + 1):
        n_iters = it
        score_mean = _score_mean(yc, params.b)
        est = _e_step_unfolded(x1, score_mean, params)
        if it <= config.anneal_iters:
            noise_scale = np.sqrt(params.sigma_e2) / it
            est = EStepResult(
                est.u_hat + rng.standard_normal(est.u_hat.shape) * noise_scale,
                est.sigma_u,
            )
        new_loadings = _m_step_loadings_tensor(xc, est, params.loadings)
        b, sigma_f, sigma_e2 = _m_step_regression_tensor(
            xc, x_norm2, yc, est, new_loadings, config.diag_sigma_f
        )
        params = normalize_params(new_loadings, b, sigma_f, sigma_e2, config.diag_sigma_f)
        ll = _loglik_unfolded(x1, _score_mean(yc, params.b), params)
        if not np.isfinite(ll):
            raise NumericalError(
                f"non-finite marginal log-likelihood at iteration {it} "
                f"(sigma_e2={params.sigma_e2:.3e})",
                iteration=it,
            )
        trace.append(ll)
        if it >= config.anneal_iters + 2:
            prev = trace[-2]
            if abs(ll - prev) / max(1.0, abs(prev)) < config.tol:
                converged = True
                break
    final_est = _e_step_unfolded(x1, _score_mean(yc, params.b), params)
    return FitResult(
        params=params,
        e_step=final_est,
        loglik_trace=np.asarray(trace),
        converged=converged,
        n_iters=n_iters,
        config=config,
    )


def identifiability_check(params, y=None):
    """Kruskal-condition diagnostic for parameter identifiability.

    margin = kr(Y B) + sum_k kr(V_k) - (2R + K); satisfied requires
    margin >= 0 and a full-column-rank Y.  The condition is sufficient, not
    necessary.  When the model has no covariate effect (B == 0), the sample
    mode of the latent CP structure is carried by the scores themselves,
    whose k-rank equals rank(Sigma_f) almost surely; that rank substitutes
    for kr(Y B).
    """
    rank = params.rank
    if rank > 20:
        raise ValueError("identifiability_check supports rank <= 20")
    n_modes = params.n_modes
    kr_sum = sum(k_rank(v) for v in params.loadings)
    supervised = y is not None and params.b.shape[0] > 0 and params.b.any()
    if supervised:
        y = check_matrix(y, "y")
        mean_kr = k_rank(y @ params.b)
        y_full = np.linalg.matrix_rank(y) == y.shape[1]
    else:
        w = np.linalg.eigvalsh((params.sigma_f + params.sigma_f.T) / 2.0)
        mean_kr = int(np.count_nonzero(w > RANK_RTOL * max(w.max(), 0.0)))
        y_full = True if y is None else np.linalg.matrix_rank(y) == y.shape[1]
    margin = int(mean_kr + kr_sum - (2 * rank + n_modes))
    return (margin >= 0 and bool(y_full), margin)


def conditional_mean(y_new, params):
    """Model-implied mean array for one covariate vector:
    ``[[y'B, V_1, ..., V_K]]`` of shape ``1 x d_1 x ... x d_K``.

    ``y_new`` is on the centered covariate scale; callers add stored sample
    means back for raw-scale reconstructions.
    """
    y_new = check_vector(y_new, "y_new")
    if y_new.shape[0] != params.b.shape[0]:
        raise ValueError(f"y_new has length {y_new.shape[0]}, b expects {params.b.shape[0]}")
    scores = y_new[None, :] @ params.b
    return cp_compose(scores, params.loadings)


class SupCP(BaseEstimator):
    """Supervised probabilistic CP decomposition, estimator-style.

    Parameters
    ----------
    rank : int
        Number of latent components.
    max_iter, tol, anneal_iters, init, diag_sigma_f, random_state
        Forwarded to the EM fit (see :func:`fit_supcp`).
    seeds : sequence of int, optional
        Multi-start seeds; the highest-likelihood start wins.
    n_jobs : int
        Parallelism across starts.

    Attributes
    ----------
    loadings_ : list of ndarray
    coef_ : ndarray of shape (q, rank)
    sigma_f_ : ndarray of shape (rank, rank)
    sigma_e2_ : float
    scores_ : ndarray of shape (n, rank)
        Posterior score means of the training samples.
    score_cov_ : ndarray of shape (rank, rank)
    loglik_trace_ : ndarray
    x_mean_, y_mean_ : stored centering statistics
    """

    def __init__(
        self,
        rank=2,
        max_iter=1000,
        tol=1e-8,
        anneal_iters=100,
        init="random",
        diag_sigma_f=True,
        random_state=0,
        seeds=None,
        n_jobs=1,
    ):
        self.rank = rank
        self.max_iter = max_iter
        self.tol = tol
        self.anneal_iters = anneal_iters
        self.init = init
        self.diag_sigma_f = diag_sigma_f
        self.random_state = random_state
        self.seeds = seeds
        self.n_jobs = n_jobs

    def _config(self):
        return FitConfig(
            rank=self.rank,
            max_iters=self.max_iter,
            tol=self.tol,
            anneal_iters=self.anneal_iters,
            init_method=self.init,
            seed=self.random_state,
            diag_sigma_f=self.diag_sigma_f,
        )

    def fit(self, X, y=None):
        result = fit_supcp(X, y, self._config(), seeds=self.seeds, n_jobs=self.n_jobs)
        self.result_ = result
        self.loadings_ = result.params.loadings
        self.coef_ = result.params.b
        self.sigma_f_ = result.params.sigma_f
        self.sigma_e2_ = result.params.sigma_e2
        self.scores_ = result.e_step.u_hat
        self.score_cov_ = result.e_step.sigma_u
        self.loglik_trace_ = result.loglik_trace
        self.converged_ = result.converged
        self.n_iter_ = result.n_iters
        self.x_mean_ = result.x_mean
        self.y_mean_ = result.y_mean
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise NotFittedError("SupCP is not fitted yet")

    def transform(self, X, y=None):
        """Posterior score means for new samples."""
        self._check_fitted()
        X = check_multiway(X, min_order=2)
        xc = X - self.x_mean_
        yc = None
        if y is not None and self.y_mean_ is not None:
            yc = check_matrix(y, "y") - self.y_mean_
        return e_step(xc, yc, self.result_.params).u_hat

    def predict(self, y):
        """Covariate-conditional mean arrays, sample means restored."""
        self._check_fitted()
        y = check_matrix(y, "y")
        if self.y_mean_ is None:
            raise ValueError("model was fitted without covariates")
        yc = y - self.y_mean_
        rows = [
            conditional_mean(yc[i], self.result_.params) + self.x_mean_[None]
            for i in range(y.shape[0])
        ]
        return np.concatenate(rows, axis=0)

    def score(self, X, y=None):
        """Mean per-sample marginal log-likelihood of held-out data."""
        self._check_fitted()
        X = check_multiway(X, min_order=2)
        xc = X - self.x_mean_
        yc = None
        if y is not None and self.y_mean_ is not None:
            yc = check_matrix(y, "y") - self.y_mean_
        return marginal_loglik(xc, yc, self.result_.params) / X.shape[0]
