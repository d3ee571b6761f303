"""Unit-hypersphere primitives.

Unit vectors are plain float64 numpy arrays with ||v|| = 1; batches are
(n, d) arrays with unit rows. Functions that produce vectors guarantee the
norm invariant; consumers assume it.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DegenerateVector,
    DimensionMismatch,
    InvalidConcentration,
    InvalidDimension,
)
from .rng import RngStream

EPS_NORM = 1e-12


def normalize(v) -> np.ndarray:
    """Project ``v`` onto the unit sphere; error on near-zero input."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n <= EPS_NORM:
        raise DegenerateVector(f"norm {n:.3e} <= {EPS_NORM:.0e}")
    return v / n


def is_unit(v, tol: float = 1e-9) -> bool:
    v = np.asarray(v, dtype=np.float64)
    return abs(float(np.linalg.norm(v)) - 1.0) <= tol


def cosine(u, v) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(f"shapes {u.shape} vs {v.shape}")
    return float(np.clip(np.dot(u, v), -1.0, 1.0))


def tangent_project(z, g) -> np.ndarray:
    """Remove from ``g`` its component along the unit vector ``z``."""
    z = np.asarray(z, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if z.shape != g.shape:
        raise DimensionMismatch(f"shapes {z.shape} vs {g.shape}")
    return g - np.dot(z, g) * z


def sample_uniform_sphere(d: int, n: int, rng: RngStream) -> np.ndarray:
    """Draw ``n`` i.i.d. uniform points on S^{d-1}, rows of an (n, d) array.

    Normalized standard Gaussians: rotation-invariant by construction.
    """
    if d < 2:
        raise InvalidDimension(f"d={d} < 2")
    if n < 1:
        raise InvalidDimension(f"n={n} < 1")
    g = rng.generator().standard_normal((n, d))
    return _normalize_rows(g)


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    bad = norms <= EPS_NORM
    if np.any(bad):
        # Probability ~0 for Gaussian draws; resample deterministically by
        # nudging onto the first axis rather than dividing by ~0.
        x = x.copy()
        x[bad[:, 0], :] = 0.0
        x[bad[:, 0], 0] = 1.0
        norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / norms


def _vmf_radial_samples(d: int, kappa: float, n: int, gen: np.random.Generator) -> np.ndarray:
    """Rejection-sample the radial coordinate w with density
    proportional to (1 - w^2)^{(d-3)/2} e^{kappa w} on [-1, 1].

    Wood's envelope: propose w through a Beta((d-1)/2, (d-1)/2) draw and
    accept against the exact density ratio. Acceptance rate is bounded
    below uniformly in d and kappa, so the vectorized loop terminates fast.
    """
    m = d - 1
    b = m / (np.sqrt(4.0 * kappa * kappa + m * m) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m * np.log(1.0 - x0 * x0)

    out = np.empty(n, dtype=np.float64)
    filled = 0
    while filled < n:
        todo = n - filled
        block = max(todo + (todo // 2) + 16, 64)
        z = gen.beta(0.5 * m, 0.5 * m, size=block)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        logu = np.log(gen.random(size=block))
        accept = kappa * w + m * np.log(1.0 - x0 * w) - c >= logu
        w = w[accept]
        take = min(w.size, todo)
        out[filled:filled + take] = w[:take]
        filled += take
    return out


def sample_vmf(mu, kappa: float, n: int, rng: RngStream) -> np.ndarray:
    """Draw ``n`` i.i.d. von Mises-Fisher samples around the unit vector ``mu``.

    Composition sampler: radial coordinate w = mu^T z by rejection on its
    exact marginal, tangent direction uniform in the orthogonal complement
    of mu, sample = w * mu + sqrt(1 - w^2) * v.
    """
    mu = np.asarray(mu, dtype=np.float64)
    d = mu.shape[-1]
    if mu.ndim != 1 or d < 2:
        raise InvalidDimension(f"mu must be a vector with d >= 2, got shape {mu.shape}")
    if not np.isfinite(kappa) or kappa <= 0.0:
        raise InvalidConcentration(f"kappa={kappa} <= 0")
    if n < 1:
        raise InvalidDimension(f"n={n} < 1")

    gen = rng.generator()
    w = _vmf_radial_samples(d, float(kappa), n, gen)

    # Uniform tangent directions: Gaussian draws with the mu-component removed.
    g = gen.standard_normal((n, d))
    g -= np.outer(g @ mu, mu)
    v = _normalize_rows(g)

    z = w[:, None] * mu[None, :] + np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * v
    return _normalize_rows(z)
