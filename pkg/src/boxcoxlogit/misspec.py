"""Large-sample behaviour of a logistic fit on a fixed transform ``boxcox(X, q)``
when the truth is a logistic Box-Cox model with shape ``lam``.

Expectations over ``X`` are replaced by Monte Carlo means.  The limiting
coefficients solve ``mean[(1, w)(p - expit(g0 + g1 w))] = 0``, which is an
ordinary logistic regression with the fractional responses ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logit

from . import _kernels
from .asymptotics import median_effect
from .core import LognormalSpec, ModelParams, boxcox, expit
from .design import SettingSpec, derive_truth
from .exceptions import ConvergenceError, NumericalError, SingularInformationError

__all__ = [
    "ARE_MC_N",
    "SANDWICH_MC_N",
    "MisspecResult",
    "AreSurface",
    "limiting_gamma",
    "sandwich_avar",
    "are",
    "empirical_are",
    "are_surface",
    "misspec_cell",
]

ARE_MC_N = 50_000
SANDWICH_MC_N = 100_000
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class MisspecResult:
    q: float
    gamma0: float
    gamma1: float
    avar: np.ndarray
    are: float
    mc_n: int
    mc_se: np.ndarray
    median_effect: float

    @property
    def asd_gamma1(self) -> float:
        return float(np.sqrt(self.avar[1, 1]))


def _draw_z(mc_n: int, seed) -> np.ndarray:
    if mc_n < 1000:
        raise ValueError("mc_n must be at least 1000")
    return np.random.default_rng(seed).standard_normal(int(mc_n))


def _exposures(dist: LognormalSpec, z):
    return np.exp(dist.mu + dist.sigma * z)


def _solve_gamma(p, w):
    if not np.std(w) > 1e-10 * (1.0 + np.abs(w).mean()):
        raise SingularInformationError("transformed exposure has (near) zero variance")
    b0, b1, _, it, status, i00, i01, i11 = _kernels.irls(
        w, p, logit(p.mean()), 0.0, NEWTON_MAX_ITER, NEWTON_TOL, np.inf
    )
    if status != _kernels.IRLS_OK:
        raise ConvergenceError(f"moment equations not solved (status {status}, {it} iterations)")
    se = np.sqrt(np.diag(np.linalg.inv(np.array([[i00, i01], [i01, i11]]))))
    return float(b0), float(b1), se


def limiting_gamma(
    truth: ModelParams, dist: LognormalSpec, q: float, mc_n: int = ARE_MC_N, seed=0
) -> tuple[float, float, np.ndarray]:
    """Large-sample limit ``(gamma0, gamma1)`` of the misspecified fit.

    Returns ``(gamma0, gamma1, mc_se)``; ``mc_se`` are the standard errors
    the fractional-response regression reports, used as a yardstick for
    the simulation error of the limits.
    """
    x = _exposures(dist, _draw_z(mc_n, seed))
    p = expit(truth.beta0 + truth.beta1 * boxcox(x, truth.lam))
    return _solve_gamma(p, boxcox(x, q))


def _sandwich(p, w, gamma):
    ps = expit(gamma[0] + gamma[1] * w)
    xm = np.stack([np.ones_like(w), w])
    j = (xm * (ps * (1.0 - ps))) @ xm.T / w.size
    v = (xm * (p - 2.0 * p * ps + ps * ps)) @ xm.T / w.size
    try:
        jinv = np.linalg.inv(j)
    except np.linalg.LinAlgError:
        raise SingularInformationError("J is singular") from None
    if not np.linalg.det(j) > 0:
        raise SingularInformationError("J is singular")
    out = jinv @ v @ jinv
    return 0.5 * (out + out.T)


def sandwich_avar(
    truth: ModelParams,
    dist: LognormalSpec,
    q: float,
    gamma,
    mc_n: int = SANDWICH_MC_N,
    seed=0,
) -> np.ndarray:
    """Per-observation sandwich covariance ``J^-1 V J^-1`` of ``(gamma0, gamma1)``.

    ``J = E[p*(1-p*) (1,W)(1,W)^T]`` and
    ``V = E[(P - 2 P p* + p*^2) (1,W)(1,W)^T]``, with ``p*`` the fitted risk
    at ``gamma`` and ``P`` the true risk.
    """
    x = _exposures(dist, _draw_z(mc_n, seed))
    p = expit(truth.beta0 + truth.beta1 * boxcox(x, truth.lam))
    return _sandwich(p, boxcox(x, q), gamma)


def empirical_are(slope: float, median: float) -> float:
    """``|slope - median| / |median|``."""
    if median == 0:
        raise ZeroDivisionError("median effect is zero; relative error undefined")
    return abs((slope - median) / median)


def are(truth: ModelParams, dist: LognormalSpec, q: float, gamma1: float) -> float:
    """Absolute relative error of ``gamma1`` against the median effect on the ``q`` scale."""
    return empirical_are(gamma1, median_effect(truth, dist.mu, q))


def misspec_cell(
    truth: ModelParams,
    dist: LognormalSpec,
    q: float,
    mc_n: int = ARE_MC_N,
    sandwich_mc_n: int = SANDWICH_MC_N,
    seed=0,
) -> MisspecResult:
    """Limiting coefficients, sandwich covariance and ARE for one ``q``."""
    g0, g1, se = limiting_gamma(truth, dist, q, mc_n, seed)
    av = sandwich_avar(truth, dist, q, (g0, g1), sandwich_mc_n, seed)
    med = median_effect(truth, dist.mu, q)
    return MisspecResult(
        q=float(q),
        gamma0=g0,
        gamma1=g1,
        avar=av,
        are=are(truth, dist, q, g1),
        mc_n=int(mc_n),
        mc_se=se,
        median_effect=med,
    )


@dataclass(frozen=True)
class AreSurface:
    setting: SettingSpec
    lambda_grid: np.ndarray
    q_grid: np.ndarray
    are: np.ndarray  # (len(lambda_grid), len(q_grid)); NaN marks failed cells
    gamma0: np.ndarray
    gamma1: np.ndarray
    median_effect: np.ndarray


def are_surface(
    setting: SettingSpec, lambda_grid=None, q_grid=None, mc_n: int = ARE_MC_N, seed=0
) -> AreSurface:
    """ARE over a ``(lam, q)`` grid for one setting.

    For each ``lam`` the truth is re-derived from the setting's risk anchors.
    All cells share one set of normal draws (common random numbers), so the
    surface is smooth in both directions and independent of evaluation
    order.
    """
    lgrid = np.arange(9) * 0.25 if lambda_grid is None else np.asarray(lambda_grid, float)
    qgrid = np.arange(9) * 0.25 if q_grid is None else np.asarray(q_grid, float)
    z = _draw_z(mc_n, seed)
    shape = (lgrid.size, qgrid.size)
    out = {k: np.full(shape, np.nan) for k in ("are", "g0", "g1", "med")}
    ws = {}
    for i, lam in enumerate(lgrid):
        truth, dist = derive_truth(setting.with_lambda(lam))
        x = _exposures(dist, z)
        p = expit(truth.beta0 + truth.beta1 * boxcox(x, truth.lam))
        for j, q in enumerate(qgrid):
            key = (dist.mu, dist.sigma, q)
            if key not in ws:
                ws[key] = boxcox(x, q)
            try:
                g0, g1, _ = _solve_gamma(p, ws[key])
            except NumericalError:
                continue
            med = median_effect(truth, dist.mu, q)
            out["g0"][i, j] = g0
            out["g1"][i, j] = g1
            out["med"][i, j] = med
            if med != 0:
                out["are"][i, j] = empirical_are(g1, med)
    return AreSurface(setting, lgrid, qgrid, out["are"], out["g0"], out["g1"], out["med"])
