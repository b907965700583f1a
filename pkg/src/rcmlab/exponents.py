"""Scalar machinery: derived exponents, the boundedness constant, the
regularized logarithm, weak-Harnack constants, and the Gaussian kernel.

Only finite integrability exponents are representable; callers needing an
infinite exponent substitute a finite admissible surrogate, which can only
increase the corresponding norm.  Unspecified dimensional constants always
enter as explicit caller-supplied parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class ExponentSet:
    """All derived exponents for an admissible (d, p, q)."""

    d: int
    p: float
    q: float
    delta1: float
    delta2: float
    theta: float
    nu: float
    gamma: float
    gamma_hat: float
    eps: float
    Q: float
    ell: float
    p_sphere: float

    def s_bulk(self, s: float) -> float:
        """Bulk Sobolev conjugate d*s/(d-s) for s in [1, d)."""
        if not 1 <= s < self.d:
            raise DomainError(f"s must lie in [1, {self.d})")
        return self.d * s / (self.d - s)

    @property
    def p_prime(self) -> float:
        return self.p / (self.p - 1.0)


def _require(cond: bool, label: str) -> None:
    if not cond:
        raise DomainError(f"inadmissible exponents: {label} fails")


def derive_exponents(d: int, p: float, q: float) -> ExponentSet:
    """Derive every exponent from (d, p, q), rejecting boundary cases by name."""
    if int(d) != d or d < 2:
        raise DomainError("d must be an integer >= 2")
    d = int(d)
    p, q = float(p), float(q)
    _require(math.isfinite(p) and math.isfinite(q), "p, q finite")
    _require(p > 1, "p > 1")
    _require(q > d / 2, "q > d/2")
    _require(1.0 / p + 1.0 / q < 2.0 / (d - 1), "1/p + 1/q < 2/(d-1)")

    delta1 = 2.0 / (d - 1) - 1.0 / p - 1.0 / q
    delta2 = 2.0 / d - 1.0 / q
    theta = p if d == 2 else 1.0 + p * delta1
    nu = 1.0 - delta2 * (1.0 - 1.0 / theta)
    gamma = 2.0 + 1.0 / p + 1.0 / (theta * q)
    gamma_hat = 2.0 + 1.0 / p + 1.0 / q
    eps = delta2 / theta
    Q = 2.0 / (1.0 - delta2)
    # interpolation weight between the L^2 and L^(nu*Q) norms
    ell = (1.0 / (2.0 * (1.0 + eps)) - 1.0 / (nu * Q)) / (0.5 - 1.0 / (nu * Q))
    p_sphere = 1.0 / (1.0 / (d - 1) + (p - theta) / (2.0 * p))

    _require(delta1 > 0, "delta1 > 0")
    _require(delta2 > 0, "delta2 > 0")
    _require(0 < nu < 1, "nu in (0,1)")
    _require(gamma > 2, "gamma > 2")
    _require(Q > 2, "Q > 2")
    _require(theta > 1, "theta > 1")
    return ExponentSet(d, p, q, delta1, delta2, theta, nu, gamma, gamma_hat,
                       eps, Q, ell, p_sphere)


def constant_C(norm_p: float, norm_q_inv: float, tau: float, exps: ExponentSet) -> float:
    """Boundedness constant from the environment norms over a box at scale tau."""
    if tau <= 0:
        raise DomainError("tau must be positive")
    if norm_p < 0 or norm_q_inv < 0:
        raise DomainError("norms must be nonnegative")
    nu = exps.nu
    inner = norm_q_inv * (norm_p + 1.0 / tau) ** (2.0 - nu)
    return max(1.0, math.sqrt(tau) * inner ** (1.0 / (2.0 * (1.0 - nu))))


def lambda_pq(norm_p: float, norm_q_inv: float) -> float:
    """Ellipticity contrast: product of the two environment norms."""
    if norm_p < 0 or norm_q_inv < 0:
        raise DomainError("norms must be nonnegative")
    return norm_p * norm_q_inv


_CBAR: float | None = None


def cbar() -> float:
    """Smallest root of 2 c log(1/c) = 1 - c in [1/4, 1/3], by bisection."""
    global _CBAR
    if _CBAR is None:
        lo, hi = 0.25, 1.0 / 3.0
        f = lambda c: 2.0 * c * math.log(1.0 / c) - (1.0 - c)
        if f(lo) > 0 or f(hi) < 0:
            raise RuntimeError("bisection bracket invalid")
        while hi - lo > 1e-15:
            mid = 0.5 * (lo + hi)
            if f(mid) < 0:
                lo = mid
            else:
                hi = mid
        _CBAR = 0.5 * (lo + hi)
    return _CBAR


def g_eval(z: float) -> float:
    """Regularized non-increasing convex surrogate of max(-log z, 0)."""
    if z <= 0:
        raise DomainError("g is defined for positive arguments only")
    c = cbar()
    if z <= c:
        return -math.log(z)
    if z <= 1.0:
        return (z - 1.0) ** 2 / (2.0 * c * (1.0 - c))
    return 0.0


def g_prime(z: float) -> float:
    """Derivative of g (continuous across the matching point)."""
    if z <= 0:
        raise DomainError("g is defined for positive arguments only")
    c = cbar()
    if z <= c:
        return -1.0 / z
    if z <= 1.0:
        return (z - 1.0) / (c * (1.0 - c))
    return 0.0


def g_eval_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if np.any(z <= 0):
        raise DomainError("g is defined for positive arguments only")
    c = cbar()
    out = np.zeros_like(z)
    low = z <= c
    mid = (z > c) & (z <= 1.0)
    out[low] = -np.log(z[low])
    out[mid] = (z[mid] - 1.0) ** 2 / (2.0 * c * (1.0 - c))
    return out


def g_prime_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if np.any(z <= 0):
        raise DomainError("g is defined for positive arguments only")
    c = cbar()
    out = np.zeros_like(z)
    low = z <= c
    mid = (z > c) & (z <= 1.0)
    out[low] = -1.0 / z[low]
    out[mid] = (z[mid] - 1.0) / (c * (1.0 - c))
    return out


def weak_harnack_constants(d: int, lam: float, sigma2: float, norm1: float,
                           exps: ExponentSet, big_c: float, norm_qd2: float,
                           c_free: float, eps_level: float = 1.0) -> tuple[float, float]:
    """Explicit density level h and lower bound gamma for the weak Harnack step.

    c_free stands in for the unspecified dimensional constant and is chosen
    by the caller (experiments calibrate it); eps_level is the density
    threshold of the hypothesis.
    """
    if not 0 < lam < 1:
        raise DomainError("lambda must lie in (0,1)")
    if sigma2 >= 1 or sigma2 <= 0:
        raise DomainError("sigma2 must lie in (0,1)")
    if norm1 < 0 or norm_qd2 < 0 or big_c < 0:
        raise DomainError("norms must be nonnegative")
    h = math.exp(-c_free * (1.0 + norm1 / ((1.0 - sigma2) ** 2 * lam**d)))
    expo = 2.0 * exps.p / (exps.p - 1.0)
    gamma = eps_level * math.exp(-c_free * (1.0 + norm1 + big_c**expo * norm_qd2))
    return h, gamma


def gaussian_kernel(t: float, x, sigma2) -> float:
    """Centered Gaussian density with covariance t * sigma2, evaluated at x."""
    if t <= 0:
        raise DomainError("t must be positive")
    S = np.asarray(sigma2, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    d = x.shape[0]
    if S.shape != (d, d):
        raise DomainError("covariance shape does not match the point")
    det = float(np.linalg.det(S))
    if det <= 0 or not np.all(np.isfinite(S)):
        raise DomainError("covariance must be symmetric positive definite")
    try:
        sol = np.linalg.solve(S, x)
    except np.linalg.LinAlgError:
        raise DomainError("covariance must be nonsingular") from None
    quad = float(x @ sol)
    return math.exp(-quad / (2.0 * t)) / math.sqrt((2.0 * math.pi * t) ** d * det)
