"""Input checks shared across the package.

Each helper coerces to float64, verifies shape/finiteness, and raises
ValueError with a message naming the offending argument.
"""

import numpy as np

__all__ = ["check_multiway", "check_matrix", "check_vector"]


def check_multiway(x, min_order=1, name="x"):
    """Validate a dense multiway array: at least ``min_order`` modes, every
    dimension >= 1, all values finite.  Returns a float64 ndarray."""
    x = np.asarray(x, dtype=float)
    if x.ndim < min_order:
        raise ValueError(f"{name} must have at least {min_order} mode(s), got {x.ndim}")
    if any(d < 1 for d in x.shape):
        raise ValueError(f"{name} has an empty mode: shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_matrix(m, name="m"):
    """Validate a 2-D matrix with finite entries.  Returns a float64 ndarray."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got {m.ndim}-D")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} has an empty dimension: shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite values")
    return m


def check_vector(v, name="v"):
    """Validate a finite 1-D vector.  Returns a float64 ndarray."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v
