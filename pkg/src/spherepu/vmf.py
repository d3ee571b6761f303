"""von Mises-Fisher distribution statistics.

Densities on S^{d-1}:

    positive class   p(z|1) = C_d(kappa) * exp(kappa * mu^T z)
    negative class   p(z|0) = U_d        (uniform)

with

    log C_d(kappa) = (d/2 - 1) log kappa - (d/2) log(2 pi) - log I_{d/2-1}(kappa)
    U_d            = Gamma(d/2) / (2 pi^{d/2})

All Bessel work happens in log space: the modified Bessel function
I_nu(kappa) overflows or underflows float64 long before the quantities
this module reports do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateResultant,
    DegenerateThreshold,
    DegenerateVector,
    DimensionMismatch,
    InvalidConcentration,
    InvalidDimension,
    NumericOverflow,
)
from .sphere import EPS_NORM, is_unit

# Ascending series handles any kappa without cancellation (all terms are
# positive); the asymptotic branch only exists to cap the series length.
# Past this cutoff the uniform large-order expansion is good to ~1e-10.
_SERIES_CUTOFF = 40.0


def _log_iv_series(nu: float, kappa: float) -> float:
    """log I_nu(kappa) by the ascending series, summed in log space."""
    half_log = math.log(0.5 * kappa)
    # Terms peak near j* solving (j+1)(nu+j+1) = (kappa/2)^2.
    peak = 0.5 * (math.sqrt((nu + 2.0) ** 2 + kappa * kappa) - (nu + 2.0))
    jmax = int(peak + 12.0 * math.sqrt(peak + 16.0) + 40.0)
    j = np.arange(jmax + 1, dtype=np.float64)
    lgam_j = np.array([math.lgamma(v + 1.0) for v in j])
    lgam_nuj = np.array([math.lgamma(nu + v + 1.0) for v in j])
    terms = (2.0 * j + nu) * half_log - lgam_j - lgam_nuj
    m = float(np.max(terms))
    return m + float(np.log(np.sum(np.exp(terms - m))))


# Polynomials u_k(t) of the uniform large-order expansion.
_U_POLYS = (
    ((3.0, 1), (-5.0, 3)),
    ((81.0, 2), (-462.0, 4), (385.0, 6)),
    ((30375.0, 3), (-369603.0, 5), (765765.0, 7), (-425425.0, 9)),
    (
        (4465125.0, 4),
        (-94121676.0, 6),
        (349922430.0, 8),
        (-446185740.0, 10),
        (185910725.0, 12),
    ),
    (
        (1519035525.0, 5),
        (-49286948607.0, 7),
        (284499769554.0, 9),
        (-614135872350.0, 11),
        (566098157625.0, 13),
        (-188699385875.0, 15),
    ),
)
_U_DENOMS = (24.0, 1152.0, 414720.0, 39813120.0, 6688604160.0)


def _log_iv_uniform_asymptotic(nu: float, kappa: float) -> float:
    """log I_nu(kappa) by the uniform large-order expansion.

    Effective expansion parameter is 1/sqrt(nu^2 + kappa^2), so the branch
    is accurate whenever either argument is large.
    """
    z = kappa / nu
    s = math.hypot(1.0, z)
    t = 1.0 / s
    eta = s + math.log(z / (1.0 + s))
    series = 1.0
    for k, (poly, denom) in enumerate(zip(_U_POLYS, _U_DENOMS), start=1):
        series += sum(c * t**p for c, p in poly) / (denom * nu**k)
    return nu * eta - 0.5 * math.log(2.0 * math.pi * nu) - 0.5 * math.log(s) + math.log(series)


def _log_iv_hankel(nu: float, kappa: float) -> float:
    """log I_nu(kappa) for large kappa and small nu (Hankel expansion)."""
    mu4 = 4.0 * nu * nu
    total = 1.0
    term = 1.0
    for k in range(1, 9):
        term *= -(mu4 - (2.0 * k - 1.0) ** 2) / (8.0 * kappa * k)
        total += term
    return kappa - 0.5 * math.log(2.0 * math.pi * kappa) + math.log(total)


def log_bessel_iv(nu: float, kappa: float) -> float:
    """Numerically stable log I_nu(kappa) for nu >= 0, kappa > 0."""
    if kappa <= max(_SERIES_CUTOFF, nu):
        out = _log_iv_series(nu, kappa)
    elif nu >= 0.5:
        out = _log_iv_uniform_asymptotic(nu, kappa)
    else:
        out = _log_iv_hankel(nu, kappa)
    if not math.isfinite(out):
        raise NumericOverflow(f"log I_nu lost precision at nu={nu}, kappa={kappa}")
    return out


def _check_dim(d: int) -> None:
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise InvalidDimension(f"d={d!r} must be an integer >= 2")


def _check_kappa(kappa: float) -> None:
    if not np.isfinite(kappa) or kappa <= 0.0:
        raise InvalidConcentration(f"kappa={kappa} must be positive and finite")


def log_norm_const(d: int, kappa: float) -> float:
    """log C_d(kappa), the vMF normalizing constant."""
    _check_dim(d)
    _check_kappa(kappa)
    nu = 0.5 * d - 1.0
    out = nu * math.log(kappa) - 0.5 * d * math.log(2.0 * math.pi) - log_bessel_iv(nu, kappa)
    if not math.isfinite(out):
        raise NumericOverflow(f"log C_d lost precision at d={d}, kappa={kappa}")
    return out


def log_uniform_density(d: int) -> float:
    """log U_d, the reciprocal surface area of S^{d-1}."""
    _check_dim(d)
    return math.lgamma(0.5 * d) - math.log(2.0) - 0.5 * d * math.log(math.pi)


def mean_resultant_length(d: int, kappa: float) -> float:
    """A_d(kappa) = I_{d/2}(kappa) / I_{d/2-1}(kappa) = E[mu^T z] under vMF."""
    _check_dim(d)
    _check_kappa(kappa)
    nu = 0.5 * d - 1.0
    return math.exp(log_bessel_iv(nu + 1.0, kappa) - log_bessel_iv(nu, kappa))


@dataclass(frozen=True)
class VmfParams:
    """Mean direction and concentration of one vMF component."""

    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        _check_kappa(self.kappa)
        if not is_unit(self.mu):
            raise DegenerateVector("mu must satisfy the unit-norm invariant")

    @property
    def d(self) -> int:
        return int(np.asarray(self.mu).shape[0])


def vmf_log_density(z, params: VmfParams) -> float:
    """log p(z | positive) = log C_d(kappa) + kappa * mu^T z."""
    z = np.asarray(z, dtype=np.float64)
    mu = np.asarray(params.mu, dtype=np.float64)
    if z.shape != mu.shape:
        raise DimensionMismatch(f"shapes {z.shape} vs {mu.shape}")
    return log_norm_const(params.d, params.kappa) + params.kappa * float(np.dot(mu, z))


@dataclass(frozen=True)
class BayesRule:
    """Optimal decision rule of the vMF-uniform generative model.

    Predict positive when mu^T z >= tau, equivalently kappa * mu^T z >= T.
    """

    tau: float
    T: float
    pi: float
    d: int
    kappa: float


def bayes_threshold(d: int, kappa: float, pi: float) -> BayesRule:
    """Bayes-optimal threshold for the vMF-uniform mixture with prior pi.

    T = -log(pi/(1-pi)) - (log C_d(kappa) - log U_d), tau = T / kappa.
    Raises DegenerateThreshold when T falls outside [-kappa, kappa], where
    the rule is constant; callers decide how to handle that regime.
    """
    _check_dim(d)
    _check_kappa(kappa)
    if not 0.0 < pi < 1.0:
        raise InvalidConcentration(f"pi={pi} must lie strictly inside (0, 1)")
    log_odds = math.log(pi) - math.log1p(-pi)
    big_t = -log_odds - (log_norm_const(d, kappa) - log_uniform_density(d))
    if not -kappa <= big_t <= kappa:
        raise DegenerateThreshold(
            f"T={big_t:.6g} outside [-kappa, kappa]=[{-kappa:.6g}, {kappa:.6g}]"
        )
    return BayesRule(tau=big_t / kappa, T=big_t, pi=pi, d=d, kappa=kappa)


def mle_mean_direction(samples) -> np.ndarray:
    """Maximum-likelihood vMF mean direction: the normalized sample mean."""
    z = np.asarray(samples, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 1:
        raise DimensionMismatch(f"expected a nonempty (n, d) array, got shape {z.shape}")
    mean = z.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm <= EPS_NORM:
        raise DegenerateResultant(f"resultant norm {norm:.3e} <= {EPS_NORM:.0e}")
    return mean / norm
