"""Shared vector numerics: distances, norms, quantiles, RNG, gradient checking.

Everything here is a pure function of its inputs. All arithmetic is double
precision.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, NumericalError, UsageError


def seeded_rng(*key: int) -> np.random.Generator:
    """Deterministic generator for a composite non-negative integer key.

    Every stochastic corner of the package derives its generator from the
    run seed plus a fixed stream tag through this helper, so identical
    configurations replay bit-identically.
    """
    for k in key:
        if k < 0:
            raise UsageError(f"seed components must be non-negative, got {k}")
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def distance(a, b) -> float:
    """Euclidean (L2) distance between two equal-length vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise UsageError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def normalize(a) -> np.ndarray:
    """Scale a vector to unit L2 norm, preserving its direction."""
    a = np.asarray(a, dtype=float)
    n = np.linalg.norm(a)
    if n == 0.0:
        raise DegenerateInputError("cannot normalize a zero vector")
    return a / n


def nearest_rank_quantile(values, sigma: float) -> float:
    """Nearest-rank quantile: sorted element at 0-based index ceil(sigma*n) - 1.

    Always returns a member of ``values``, never an interpolation, so
    sigma=1 is the maximum and the result is monotone in sigma.
    """
    if not 0.0 < sigma <= 1.0:
        raise UsageError(f"quantile level must lie in (0, 1], got {sigma}")
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise DegenerateInputError("quantile of an empty set")
    idx = int(np.ceil(sigma * v.size)) - 1
    return float(v[idx])


def finite_difference_gradient(f, at, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array.

    ``f`` is called with the perturbed array (same object, mutated in place
    coordinate by coordinate and restored afterwards). The returned gradient
    has the shape of ``at``. This is the reference oracle the analytic
    gradients in the package are tested against.
    """
    if h <= 0:
        raise UsageError(f"step size must be positive, got {h}")
    at = np.array(at, dtype=float)
    grad = np.zeros_like(at)
    flat = at.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(f(at))
        flat[i] = orig - h
        lo = float(f(at))
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericalError(f"non-finite evaluation while perturbing coordinate {i}")
        gflat[i] = (hi - lo) / (2.0 * h)
    return grad
