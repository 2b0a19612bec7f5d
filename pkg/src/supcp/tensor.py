"""Dense multiway-array primitives: unfolding, Khatri-Rao structure, CP composition.

Arrays are plain numpy ndarrays indexed [i_0, i_1, ..., i_K].  All linearized
views use the mode-1-fastest convention, i.e. Fortran order, so ``unfold`` and
the columns of ``vmat`` agree with vectorizing each slice with its first index
varying fastest.
"""

import itertools
import string

import numpy as np
from scipy.linalg import khatri_rao

from .validation import check_matrix, check_multiway

__all__ = [
    "outer_product",
    "unfold",
    "fold",
    "vmat",
    "cp_compose",
    "mttkrp",
    "frobenius_distance",
    "k_rank",
]

# Columns whose singular value falls below rtol * sigma_max count as null
# directions; shared by k_rank and the subspace helpers.
RANK_RTOL = 1e-10


def outer_product(vectors):
    """Outer product of one vector per mode.

    Parameters
    ----------
    vectors : sequence of 1-D arrays
        One vector per mode, lengths ``d_1, ..., d_K``.

    Returns
    -------
    ndarray of shape ``(d_1, ..., d_K)`` with entries
    ``prod_k vectors[k][i_k]``.
    """
    if len(vectors) == 0:
        raise ValueError("outer_product needs at least one vector")
    vecs = []
    for k, v in enumerate(vectors):
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError(f"vector {k} must be 1-D and nonempty")
        vecs.append(v)
    out = vecs[0]
    for v in vecs[1:]:
        out = np.multiply.outer(out, v)
    return out


def unfold(x, mode):
    """Matricize ``x`` along ``mode``.

    Row ``i`` of the result is the mode-1-fastest vectorization of the slice
    of ``x`` with index ``i`` in position ``mode`` (remaining modes keep their
    ascending order).

    Parameters
    ----------
    x : ndarray
    mode : int
        0-based mode to bring to the rows.

    Returns
    -------
    ndarray of shape ``(x.shape[mode], prod of the other dims)``.
    """
    x = check_multiway(x, min_order=1)
    if not 0 <= mode < x.ndim:
        raise ValueError(f"mode {mode} out of range for order-{x.ndim} array")
    return np.reshape(np.moveaxis(x, mode, 0), (x.shape[mode], -1), order="F")


def fold(m, shape, mode):
    """Inverse of :func:`unfold`: rebuild the array of ``shape`` from its
    mode-``mode`` unfolding."""
    m = check_matrix(m, "m")
    shape = tuple(int(d) for d in shape)
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} out of range for order-{len(shape)} shape")
    rest = shape[:mode] + shape[mode + 1 :]
    if m.shape[0] != shape[mode] or m.shape[1] != int(np.prod(rest, dtype=object)):
        raise ValueError(
            f"matrix of shape {m.shape} does not match folding {shape} along mode {mode}"
        )
    moved = np.reshape(m, (shape[mode],) + rest, order="F")
    return np.moveaxis(moved, 0, mode)


def vmat(factors):
    """Khatri-Rao product of loading matrices, first mode fastest.

    Column ``r`` is the mode-1-fastest vectorization of the outer product of
    the ``r``-th columns of the factors, so ``vmat([V1, ..., VK])`` has shape
    ``(prod_k d_k, R)`` and column ``r`` equals ``v_Kr kron ... kron v_1r``.
    """
    factors = _check_factors(factors)
    out = factors[0]
    for f in factors[1:]:
        # in kron(a, b) the second argument varies fastest, so accumulate with
        # the earlier modes in the trailing slot
        out = khatri_rao(f, out)
    return out


def cp_compose(u, factors):
    """Assemble the CP tensor ``[[u, V_1, ..., V_K]]``.

    Parameters
    ----------
    u : ndarray of shape (n, R)
        Sample-mode factor (scores).
    factors : sequence of ndarrays, ``V_k`` of shape (d_k, R)

    Returns
    -------
    ndarray of shape ``(n, d_1, ..., d_K)``.
    """
    u = check_matrix(u, "u")
    factors = _check_factors(factors)
    if any(f.shape[1] != u.shape[1] for f in factors):
        raise ValueError("u and factors must share the component count")
    shape = (u.shape[0],) + tuple(f.shape[0] for f in factors)
    return fold(u @ vmat(factors).T, shape, 0)


def mttkrp(x, mats, mode):
    """Matricized-tensor-times-Khatri-Rao product without materializing the
    Khatri-Rao matrix.

    Equivalent to ``unfold(x, mode) @ W`` where column ``r`` of ``W`` is the
    vectorized outer product of the ``r``-th columns of ``mats`` (one matrix
    per mode other than ``mode``, ascending mode order).
    """
    x = check_multiway(x, min_order=1)
    if not 0 <= mode < x.ndim:
        raise ValueError(f"mode {mode} out of range for order-{x.ndim} array")
    if len(mats) != x.ndim - 1:
        raise ValueError("need one matrix per mode other than the target mode")
    letters = string.ascii_lowercase
    if x.ndim + 1 > len(letters):
        raise ValueError("array order too large for einsum spelling")
    axes = letters[: x.ndim]
    comp = letters[x.ndim]
    operands, subs = [x], [axes]
    others = [ax for ax in range(x.ndim) if ax != mode]
    for ax, m in zip(others, mats):
        m = check_matrix(m, f"mats[{ax}]")
        if m.shape[0] != x.shape[ax]:
            raise ValueError(
                f"matrix for mode {ax} has {m.shape[0]} rows, expected {x.shape[ax]}"
            )
        operands.append(m)
        subs.append(axes[ax] + comp)
    spec = ",".join(subs) + "->" + axes[mode] + comp
    return np.einsum(spec, *operands, optimize=True)


def frobenius_distance(a, b):
    """Frobenius distance ``||a - b||_F`` between same-shape arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm((a - b).ravel()))


def _numerical_rank(m):
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > RANK_RTOL * s[0]))


def k_rank(m):
    """Kruskal rank: the largest k such that every set of k columns is
    linearly independent.

    Ranks are decided numerically (singular values below ``1e-10 * sigma_max``
    of the subset count as zero).  Enumeration over column subsets is
    exponential, so matrices with more than 20 columns are rejected.
    """
    m = check_matrix(m, "m")
    ncols = m.shape[1]
    if ncols > 20:
        raise ValueError("k_rank supports at most 20 columns")
    if _numerical_rank(m) == ncols:
        return ncols
    for k in range(1, ncols + 1):
        for cols in itertools.combinations(range(ncols), k):
            if _numerical_rank(m[:, cols]) < k:
                return k - 1
    return ncols


def _check_factors(factors):
    factors = list(factors)
    if len(factors) == 0:
        raise ValueError("need at least one loading matrix")
    out = [check_matrix(f, f"factors[{k}]") for k, f in enumerate(factors)]
    ranks = {f.shape[1] for f in out}
    if len(ranks) != 1:
        raise ValueError(f"loading matrices disagree on component count: {sorted(ranks)}")
    return out
