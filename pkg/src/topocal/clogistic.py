"""Logistic distribution left-censored at zero.

The latent variable ``Y* ~ Logistic(location, scale)`` is observed as
``Y = max(Y*, 0)``, so the distribution has a point mass ``Lambda(-m/s)``
at zero and the logistic density above it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


def softplus(z):
    """log(1 + exp(z)) without overflow."""
    return np.logaddexp(0.0, z)


@dataclass(frozen=True)
class CensoredLogistic:
    """Predictive distribution parameters on the square-root scale."""

    location: float
    scale: float

    def __post_init__(self):
        if not np.isfinite(self.location):
            raise ValueError(f"location must be finite, got {self.location}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")

    @property
    def mass_at_zero(self) -> float:
        return float(expit(-self.location / self.scale))

    def cdf(self, y):
        return cdf(self.location, self.scale, y)

    def sample(self, u):
        return sample(self.location, self.scale, u)

    def crps(self, y):
        return crps(self.location, self.scale, y)


def cdf(location, scale, y):
    """CDF of the zero-censored logistic; zero below the censoring point."""
    y = np.asarray(y, dtype=float)
    z = (y - location) / scale
    out = np.where(y < 0, 0.0, expit(z))
    return out[()] if out.ndim == 0 else out


def cdf_left(location, scale, y):
    """Left limit F(y-), which differs from F(y) only at y = 0."""
    y = np.asarray(y, dtype=float)
    out = np.where(y <= 0, 0.0, expit((y - location) / scale))
    return out[()] if out.ndim == 0 else out


def sample(location, scale, u):
    """Quantile transform of uniform variates ``u`` in (0, 1).

    Raises
    ------
    ValueError
        If any ``u`` lies outside the open unit interval.
    """
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0) | ~(u < 1)):
        raise ValueError("uniform variates must lie strictly inside (0, 1)")
    out = np.maximum(0.0, location + scale * np.log(u / (1.0 - u)))
    return out[()] if out.ndim == 0 else out


def crps(location, scale, y):
    """Closed-form CRPS of the zero-censored logistic.

    With ``z = (y - m)/s`` and ``l = -m/s`` the score is

        s * (softplus(z) + softplus(-z) - 1 - softplus(l) + expit(l))

    which is the integral of ``F(x)**2`` over ``[0, y]`` plus
    ``(1 - F(x))**2`` over ``[y, inf)`` in latent units. Vectorized over
    all arguments.
    """
    location = np.asarray(location, dtype=float)
    scale = np.asarray(scale, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(location)) and np.all(np.isfinite(scale)) and np.all(np.isfinite(y))):
        raise ValueError("crps requires finite location, scale and observation")
    if np.any(scale <= 0):
        raise ValueError("scale must be positive")
    if np.any(y < 0):
        raise ValueError("observations must be non-negative")
    out = _crps_terms(location, scale, y)[0]
    return out[()] if out.ndim == 0 else out


def _crps_terms(location, scale, y):
    """Return (crps, d crps/d location, d crps/d scale) without validation."""
    z = (y - location) / scale
    lo = -location / scale
    pz = expit(z)
    pl = expit(lo)
    g = softplus(z) + softplus(-z) - 1.0 - softplus(lo) + pl
    value = scale * g
    d_loc = 1.0 - 2.0 * pz + pl * pl
    d_scale = g - z * (2.0 * pz - 1.0) + lo * pl * pl
    return value, d_loc, d_scale
