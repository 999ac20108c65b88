"""Seeded sampling and small vector primitives used everywhere else.

Randomness is backed by numpy's PCG64 generator: the same seed yields the
same draw stream for a fixed numpy version, which is what the determinism
guarantees of the trainers and the CLI rest on.
"""

import numpy as np

from .errors import DimensionError

EPS = float(np.finfo(np.float64).eps)

# Outside-ball points are pulled slightly inside the boundary so that
# recomputed norms (roundoff grows with dimension) stay within
# radius*(1 + 4*eps) and a second projection is a bit-exact no-op.
_PROJECT_SHRINK = 1.0 - 128.0 * EPS


def make_rng(seed):
    """Build a deterministic generator from an integer seed."""
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    return np.random.default_rng(int(seed))


def sample_gaussian_vec(rng, d):
    """Draw a vector of d iid standard normal coordinates."""
    if d < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")
    return rng.standard_normal(d)


def sample_sign_vec(rng, m):
    """Draw a vector of m iid uniform signs, stored as float64 -1.0/+1.0."""
    if m < 1:
        raise DimensionError(f"length must be >= 1, got {m}")
    return 2.0 * rng.integers(0, 2, size=m).astype(np.float64) - 1.0


def norm2(v):
    """Euclidean norm of a vector."""
    return float(np.linalg.norm(np.asarray(v)))


def dot(u, v):
    """Inner product with a shape check."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise DimensionError(f"shape mismatch {u.shape} vs {v.shape}")
    return float(np.dot(u, v))


def axpy(alpha, u, v):
    """alpha*u + v, the usual BLAS update."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise DimensionError(f"shape mismatch {u.shape} vs {v.shape}")
    return alpha * u + v


def l2_project_to_ball(v, center, radius):
    """Project v onto the closed l2 ball B(center, radius).

    Points already inside the ball are returned unchanged (bit-identical).
    Projected points satisfy ||result - center|| <= radius*(1 + 4*eps) even
    after the norm is recomputed, and projecting twice equals projecting
    once exactly.
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    v = np.asarray(v, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if v.shape != center.shape:
        raise DimensionError(f"shape mismatch {v.shape} vs {center.shape}")
    diff = v - center
    dist = np.linalg.norm(diff)
    if dist <= radius:
        return v
    return center + diff * ((radius / dist) * _PROJECT_SHRINK)
