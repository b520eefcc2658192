"""The logistic Box-Cox model: transform, link, likelihood and derivatives.

The model is ``logit P(Y=1 | x) = beta0 + beta1 * boxcox(x, lam)`` with
``lam >= 0``.  All heavy lifting is delegated to :mod:`._kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit as _expit

from . import _kernels
from .exceptions import DataValidationError, DomainError

__all__ = [
    "ModelParams",
    "Dataset",
    "LognormalSpec",
    "boxcox",
    "boxcox_dlambda",
    "boxcox_d2lambda",
    "expit",
    "log_likelihood",
    "score",
    "hessian",
    "loglik_derivs",
]


@dataclass(frozen=True)
class ModelParams:
    beta0: float
    beta1: float
    lam: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise DomainError(f"lambda must be >= 0, got {self.lam}")

    def as_array(self) -> np.ndarray:
        return np.array([self.beta0, self.beta1, self.lam], dtype=float)

    @classmethod
    def from_array(cls, theta) -> "ModelParams":
        b0, b1, lam = (float(v) for v in theta)
        return cls(b0, b1, lam)


@dataclass(frozen=True)
class LognormalSpec:
    """Exposure distribution ``X ~ LN(mu, sigma^2)`` (log-scale parameters)."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")

    @classmethod
    def fit(cls, x) -> "LognormalSpec":
        """Maximum-likelihood lognormal fit (ddof=0 on the log scale)."""
        lx = np.log(np.asarray(x, dtype=float))
        return cls(float(lx.mean()), float(lx.std()))


@dataclass(frozen=True)
class Dataset:
    """Paired exposures ``x > 0`` and binary outcomes ``y``.

    Arrays are copied and made read-only on construction.
    """

    x: np.ndarray
    y: np.ndarray
    lx: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.array(self.x, dtype=float).ravel()
        y = np.array(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise DataValidationError(f"x and y lengths differ ({x.size} vs {y.size})")
        if x.size == 0:
            raise DataValidationError("dataset is empty")
        bad = np.flatnonzero(~(x > 0))
        if bad.size:
            raise DataValidationError(
                f"exposure must be positive; offending rows (0-based): {bad[:10].tolist()}"
            )
        bad = np.flatnonzero((y != 0) & (y != 1))
        if bad.size:
            raise DataValidationError(
                f"outcome must be 0/1; offending rows (0-based): {bad[:10].tolist()}"
            )
        lx = np.log(x)
        for a in (x, y, lx):
            a.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "lx", lx)

    @property
    def n(self) -> int:
        return self.x.size

    def __len__(self):
        return self.x.size

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx])


def _log_positive(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("Box-Cox transform requires x > 0")
    return np.log(x)


def _check_lam(lam):
    if not lam >= 0:
        raise DomainError(f"lambda must be >= 0, got {lam}")


def _terms(x, lam, k):
    _check_lam(lam)
    lx = _log_positive(x)
    out = _kernels.boxcox_terms(lx.ravel(), lam)[k]
    return out.reshape(lx.shape) if lx.ndim else float(out[0])


def boxcox(x, lam):
    """Box-Cox transform ``(x**lam - 1)/lam``, ``log(x)`` at ``lam = 0``.

    Evaluated as ``expm1(lam*log x)/lam`` with a power series near
    ``lam*log x = 0``, so it is continuous (and accurate) through ``lam = 0``.
    """
    return _terms(x, lam, 0)


def boxcox_dlambda(x, lam):
    """Derivative of :func:`boxcox` with respect to ``lam``.

    Equals ``(x**lam * log x - boxcox(x, lam)) / lam``; the limit at
    ``lam = 0`` is ``log(x)**2 / 2``.
    """
    return _terms(x, lam, 1)


def boxcox_d2lambda(x, lam):
    """Second ``lam``-derivative; ``(x**lam log(x)**2 - 2 d/dlam)/lam``, limit ``log(x)**3/3``."""
    return _terms(x, lam, 2)


def expit(t):
    """Logistic function, overflow-free for large ``|t|``."""
    return _expit(t)


def loglik_derivs(params: ModelParams, data: Dataset, order: int = 2):
    """Return ``(loglik, score, hessian)``; see :func:`._kernels.loglik_derivs`."""
    return _kernels.loglik_derivs(data.lx, data.y, params.beta0, params.beta1, params.lam, order)


def log_likelihood(params: ModelParams, data: Dataset) -> float:
    return float(loglik_derivs(params, data, order=0)[0])


def score(params: ModelParams, data: Dataset) -> np.ndarray:
    return loglik_derivs(params, data, order=1)[1].copy()


def hessian(params: ModelParams, data: Dataset) -> np.ndarray:
    """Observed Hessian of the log-likelihood, including the ``(y - p)`` terms
    that enter the ``lam`` row and column."""
    return loglik_derivs(params, data, order=2)[2].copy()
