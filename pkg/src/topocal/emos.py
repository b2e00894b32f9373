"""Censored nonhomogeneous logistic regression fitted by minimum CRPS.

Location and scale are linked to the ensemble by

    m = beta0 + beta1 * control + beta2 * mean
    log(s) = gamma0 + gamma1 * sd

and the coefficients minimize the weighted sum of exact CRPS values over
the training pairs (square-root scale).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np
from scipy import optimize

from . import clogistic
from .clogistic import CensoredLogistic
from .data import Dataset, EnsembleForecast

log = logging.getLogger(__name__)

MIN_EFFECTIVE_PAIRS = 50
LOG_SCALE_FLOOR = math.log(1e-4)


class FitError(RuntimeError):
    """Optimizer failure; ``psi`` holds the best coefficients found."""

    def __init__(self, message, psi=None):
        super().__init__(message)
        self.psi = psi


class NonIdentifiableError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class CoefficientVector:
    beta0: float = 0.0
    beta1: float = 0.0
    beta2: float = 1.0
    gamma0: float = 0.0
    gamma1: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise ValueError(f"coefficients must be finite: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.beta0, self.beta1, self.beta2, self.gamma0, self.gamma1], dtype=float)

    def as_list(self) -> list:
        return [float(v) for v in self.as_array()]

    @classmethod
    def from_array(cls, a) -> "CoefficientVector":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings.

    ``tolerance`` bounds the max-norm of the gradient of the weighted mean
    CRPS at the returned coefficients.
    """

    optimizer: str = "quasi_newton"
    max_iterations: int = 500
    tolerance: float = 1e-6
    init: Union[CoefficientVector, str] = "default"

    def __post_init__(self):
        if self.optimizer not in ("quasi_newton", "nelder_mead"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


class Predictors(NamedTuple):
    control: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    obs: np.ndarray


@dataclass(frozen=True)
class FitResult:
    psi: CoefficientVector
    mean_crps: float
    grad_norm: float
    n_iterations: int
    method: str
    scale_floor_active: bool
    n_effective: float = field(default=float("nan"))


def predictors(pairs) -> Predictors:
    if isinstance(pairs, Predictors):
        return pairs
    if isinstance(pairs, Dataset):
        if pairs.scale != "sqrt":
            raise ValueError("EMOS fitting expects a square-root transformed dataset")
        return Predictors(pairs.control, pairs.mean, pairs.sd, pairs.obs)
    raise TypeError(f"expected Dataset or Predictors, got {type(pairs).__name__}")


def _psi_array(psi) -> np.ndarray:
    if isinstance(psi, CoefficientVector):
        return psi.as_array()
    return np.asarray(psi, dtype=float)


def link_arrays(psi, control, mean, sd, floor=False):
    """Location and scale arrays; ``floor`` applies the optimization-time scale guard."""
    b0, b1, b2, g0, g1 = _psi_array(psi)
    loc = b0 + b1 * np.asarray(control) + b2 * np.asarray(mean)
    log_scale = g0 + g1 * np.asarray(sd)
    if floor:
        log_scale = np.maximum(log_scale, LOG_SCALE_FLOOR)
    return loc, np.exp(log_scale)


def link(psi, forecast: EnsembleForecast) -> CensoredLogistic:
    """Predictive distribution for one (square-root scale) ensemble."""
    with np.errstate(over="ignore"):
        loc, scale = link_arrays(psi, forecast.control, forecast.mean, forecast.sd)
    if not (np.isfinite(loc) and np.isfinite(scale) and scale > 0):
        raise ValueError(f"link produced non-finite parameters (location={loc}, scale={scale})")
    return CensoredLogistic(float(loc), float(scale))


def _weights(weights, n):
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"weights length {w.shape} does not match {n} pairs")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if not np.any(w > 0):
        raise ValueError("at least one weight must be positive")
    return w


def cost(psi, pairs, weights=None) -> float:
    """Weighted CRPS sum ``sum_i w_i CRPS(F_i, y_i)``.

    The sum is correctly rounded, so splitting a weight across duplicated
    pairs gives a bit-identical result.
    """
    p = predictors(pairs)
    w = _weights(weights, len(p.obs))
    loc, scale = link_arrays(psi, p.control, p.mean, p.sd)
    return math.fsum(w * clogistic.crps(loc, scale, p.obs))


def _objective(theta, p: Predictors, w):
    """Weighted mean CRPS and its gradient, with the scale floor in place."""
    b0, b1, b2, g0, g1 = theta
    loc = b0 + b1 * p.control + b2 * p.mean
    eta = g0 + g1 * p.sd
    active = eta < LOG_SCALE_FLOOR
    scale = np.exp(np.where(active, LOG_SCALE_FLOOR, eta))
    value, d_loc, d_scale = clogistic._crps_terms(loc, scale, p.obs)
    d_eta = np.where(active, 0.0, d_scale * scale)
    wl = w * d_loc
    we = w * d_eta
    grad = np.array([wl.sum(), wl @ p.control, wl @ p.mean, we.sum(), we @ p.sd])
    return float(w @ value), grad


def cost_gradient(psi, pairs, weights=None) -> np.ndarray:
    """Analytic gradient of :func:`cost` with respect to the five coefficients."""
    p = predictors(pairs)
    w = _weights(weights, len(p.obs))
    return _objective(_psi_array(psi), p, w)[1]


def default_init(p: Predictors, w) -> CoefficientVector:
    sel = w > 0
    mean_sd = float(np.mean(p.sd[sel])) if sel.any() else 0.0
    return CoefficientVector(0.0, 0.0, 1.0, math.log(max(mean_sd, 0.01)), 0.0)


def _canonical(p: Predictors, w):
    """Drop zero-weight rows and sort the rest so the fit is order independent."""
    keep = w > 0
    p = Predictors(*(a[keep] for a in p))
    w = w[keep]
    order = np.lexsort((w, p.sd, p.mean, p.control, p.obs))
    return Predictors(*(a[order] for a in p)), w[order]


def fit_report(pairs, weights=None, config: FitConfig = FitConfig()) -> FitResult:
    """Fit the coefficients and return diagnostics alongside them.

    Raises
    ------
    InsufficientDataError
        Fewer than 50 effective pairs (Kish effective sample size of the weights).
    NonIdentifiableError
        All observations identical and all ensembles identical.
    FitError
        The optimizer did not reach stationarity within ``max_iterations``.
    """
    p = predictors(pairs)
    w = _weights(weights, len(p.obs))
    p, w = _canonical(p, w)
    n_eff = float(w.sum() ** 2 / (w @ w))
    if n_eff < MIN_EFFECTIVE_PAIRS - 1e-9:
        raise InsufficientDataError(f"only {n_eff:.1f} effective training pairs (need {MIN_EFFECTIVE_PAIRS})")
    if np.ptp(p.obs) == 0 and np.ptp(p.control) == 0 and np.ptp(p.mean) == 0 and np.ptp(p.sd) == 0:
        raise NonIdentifiableError("non-identifiable: all observations and all ensembles are identical")

    w = w / w.sum()
    init = config.init if isinstance(config.init, CoefficientVector) else default_init(p, w)
    x0 = init.as_array()
    fun = lambda th: _objective(th, p, w)
    f0 = fun(x0)[0]

    best_x, best_f, n_iter, method = x0, f0, 0, config.optimizer
    if config.optimizer == "quasi_newton":
        res = optimize.minimize(fun, x0, jac=True, method="BFGS",
                                options={"gtol": config.tolerance, "maxiter": config.max_iterations})
        n_iter += res.nit
        if res.fun <= best_f:
            best_x, best_f = res.x, res.fun
        if not res.success:
            # Line-search failures are common near a flat optimum; polish with
            # Nelder-Mead and hand the result back to BFGS.
            log.debug("BFGS stopped (%s); falling back to Nelder-Mead", res.message)
            best_x, best_f, extra = _nelder_mead(fun, best_x, best_f, config)
            n_iter += extra
            res = optimize.minimize(fun, best_x, jac=True, method="BFGS",
                                    options={"gtol": config.tolerance, "maxiter": config.max_iterations})
            n_iter += res.nit
            if res.fun <= best_f:
                best_x, best_f = res.x, res.fun
            method = "quasi_newton+nelder_mead"
    else:
        best_x, best_f, n_iter = _nelder_mead(fun, best_x, best_f, config)

    grad = fun(best_x)[1]
    grad_norm = float(np.max(np.abs(grad)))
    if not np.all(np.isfinite(best_x)):
        raise FitError("optimizer produced non-finite coefficients", init)
    psi = CoefficientVector.from_array(best_x)
    if grad_norm > config.tolerance:
        raise FitError(
            f"no stationary point after {n_iter} iterations (gradient max-norm {grad_norm:.3g})", psi)
    eta = best_x[3] + best_x[4] * p.sd
    floor_active = bool(np.any(eta < LOG_SCALE_FLOOR))
    if floor_active:
        log.info("scale floor active for %d of %d training pairs", int(np.sum(eta < LOG_SCALE_FLOOR)), len(eta))
    return FitResult(psi, float(best_f), grad_norm, n_iter, method, floor_active, n_eff)


def _nelder_mead(fun, x0, f0, config):
    res = optimize.minimize(lambda th: fun(th)[0], x0, method="Nelder-Mead",
                            options={"maxiter": config.max_iterations * 5, "xatol": 1e-10,
                                     "fatol": 1e-14, "adaptive": True})
    if res.fun <= f0:
        return res.x, res.fun, res.nit
    return x0, f0, res.nit


def fit(pairs, weights=None, config: FitConfig = FitConfig()) -> CoefficientVector:
    """Minimum-CRPS coefficients for square-root scale training pairs."""
    return fit_report(pairs, weights, config).psi
