"""Expected information, asymptotic variances and median-effect inference.

Everything here is per observation: divide variances by ``n`` (standard
deviations by ``sqrt(n)``) to get sample-level quantities.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import _kernels
from .core import LognormalSpec, ModelParams, boxcox, expit
from .exceptions import DomainError, SingularInformationError

__all__ = [
    "Z975",
    "DEFAULT_NODES",
    "EffectEstimate",
    "InfoMatrix",
    "hermite_rule",
    "median_effect",
    "average_effect",
    "fisher_info_ghq",
    "fisher_info",
    "avar_params",
    "avar_lambda_limit_oracle",
    "median_effect_avar",
    "median_effect_ci",
    "asd_median_effect",
    "instantaneous_risk_rate",
    "sample_size_for_se",
]

Z975 = 1.959963984540054
DEFAULT_NODES = 64
DET_FLOOR = 1e-30
ADAPTIVE_Z_RANGE = 40.0


@dataclass(frozen=True)
class EffectEstimate:
    q: float
    value: float
    se: float
    ci_lower: float
    ci_upper: float


@dataclass(frozen=True)
class InfoMatrix:
    entries: np.ndarray
    nodes: int
    # max relative change of any entry when the node count is doubled
    doubling_change: float = 0.0
    method: str = "ghq"

    @property
    def converged(self) -> bool:
        return self.doubling_change <= 1e-6


@lru_cache(maxsize=32)
def _hermgauss(m: int):
    t, w = np.polynomial.hermite.hermgauss(m)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def hermite_rule(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes ``t_i`` and weights ``w_i`` with ``sum w_i f(t_i) ~ int exp(-t^2) f(t) dt``."""
    if m < 2:
        raise ValueError("need at least 2 quadrature nodes")
    return _hermgauss(int(m))


def median_effect(params: ModelParams, mu: float, q: float) -> float:
    """Median over ``X ~ LN(mu, .)`` of the log-odds slope on the ``boxcox(., q)`` scale."""
    return float(params.beta1 * np.exp((params.lam - q) * mu))


def average_effect(params: ModelParams, dist: LognormalSpec, q: float) -> float:
    d = params.lam - q
    return float(params.beta1 * np.exp(d * dist.mu + d * d * dist.sigma**2 / 2))


def _log_pq(eta):
    a = np.abs(eta)
    return -a - 2.0 * np.log1p(np.exp(-a))


def _weighted_info(lx, logw, params: ModelParams) -> np.ndarray:
    """``sum_k w_k p q g g^T`` at log-exposures ``lx``, evaluated in log space.

    ``g = (1, nu, beta1 dnu/dlam)``; working with logs keeps far-tail nodes,
    where ``nu**2`` is huge and ``p q`` underflows, from producing ``inf * 0``.
    """
    nu, dnu, _ = _kernels.boxcox_terms(lx, params.lam)
    base = logw + _log_pq(params.beta0 + params.beta1 * nu)
    g = np.stack([np.ones_like(nu), nu, params.beta1 * dnu])
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        h = np.sign(g) * np.exp(np.log(np.abs(g)) + 0.5 * base)
    h = np.nan_to_num(h, nan=0.0)
    return h @ h.T


def _info_ghq(params: ModelParams, dist: LognormalSpec, m: int) -> np.ndarray:
    t, w = hermite_rule(m)
    # z = sqrt(2) t turns exp(-t^2) into the standard normal density
    lx = dist.mu + np.sqrt(2.0) * dist.sigma * t
    with np.errstate(divide="ignore"):
        logw = np.log(w) - 0.5 * np.log(np.pi)
    return _weighted_info(lx, logw, params)


def _info_adaptive(params: ModelParams, dist: LognormalSpec, epsrel=1e-10) -> np.ndarray:
    log_norm = -0.5 * np.log(2 * np.pi)

    def f(z):
        lx = np.array([dist.mu + dist.sigma * z])
        return _weighted_info(lx, np.array([log_norm - 0.5 * z * z]), params).ravel()

    res, _ = integrate.quad_vec(
        f, -ADAPTIVE_Z_RANGE, ADAPTIVE_Z_RANGE, epsabs=0.0, epsrel=epsrel, limit=2000,
        points=np.arange(-8.0, 8.5, 1.0),
    )
    return res.reshape(3, 3)


def _relative_change(a, b) -> float:
    # entries compared on the correlation scale so near-zero off-diagonals
    # do not dominate
    scale = np.sqrt(np.abs(np.outer(np.diag(b), np.diag(b))))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(a - b) / np.maximum(scale, np.finfo(float).tiny)
    return float(np.nanmax(rel)) if np.all(np.isfinite(a - b)) else float("inf")


def fisher_info_ghq(
    params: ModelParams, dist: LognormalSpec, nodes: int = DEFAULT_NODES
) -> InfoMatrix:
    """Expected information for one observation by Gauss-Hermite quadrature.

    The node count is doubled once as an accuracy check and the largest
    relative change is kept in ``doubling_change``; ``converged`` is false
    when it exceeds 1e-6.  Large ``lam * sigma`` makes the integrands too
    sharp for any practical rule; :func:`fisher_info` falls back to adaptive
    quadrature in that case.
    """
    if nodes < 2:
        raise ValueError("need at least 2 quadrature nodes")
    a = _info_ghq(params, dist, nodes)
    b = _info_ghq(params, dist, 2 * nodes)
    return InfoMatrix(a, int(nodes), _relative_change(a, b), "ghq")


def fisher_info(
    params: ModelParams, dist: LognormalSpec, nodes: int = DEFAULT_NODES, method: str = "auto"
) -> InfoMatrix:
    """Expected per-observation information.

    ``method`` is ``"ghq"``, ``"adaptive"`` (globally adaptive Gauss-Kronrod
    in ``z``) or ``"auto"``: GHQ when its doubling check passes, adaptive
    otherwise.
    """
    if method not in ("auto", "ghq", "adaptive"):
        raise ValueError(f"unknown quadrature method {method!r}")
    if method != "adaptive":
        info = fisher_info_ghq(params, dist, nodes)
        if method == "ghq" or info.converged:
            return info
    a = _info_adaptive(params, dist)
    return InfoMatrix(a, 0, 0.0, "adaptive")


def avar_params(
    params: ModelParams, dist: LognormalSpec, nodes: int = DEFAULT_NODES, method: str = "auto"
) -> np.ndarray:
    """Per-observation asymptotic covariance of ``(beta0, beta1, lam)``."""
    info = fisher_info(params, dist, nodes, method).entries
    det = np.linalg.det(info)
    if not abs(det) > DET_FLOOR:
        raise SingularInformationError(f"det(I1) = {det:.3e} is below {DET_FLOOR:g}")
    cov = np.linalg.inv(info)
    return 0.5 * (cov + cov.T)


def avar_lambda_limit_oracle(beta0: float, lam: float, dist: LognormalSpec) -> float:
    """Closed-form ``lim_{beta1 -> 0} beta1^2 * Avar(lam_hat)``.

    With ``p`` constant at ``beta1 = 0`` the information factorises into
    ``c = p(1-p)`` times the moment matrix of ``(1, V, beta1 dV/dlam)``, where
    ``V = boxcox(X, lam)``.  Using lognormal moments with ``a = lam^2 sigma^2``

        lim C33              = c^2 exp(2 lam mu) (exp(2a) - exp(a)) / lam^2
        lim beta1^2 det(I1)  = c^3 exp(3a + 4 lam mu) (exp(a) - a - 1) sigma^2 / lam^4

    and the limit is their ratio.
    """
    if not lam > 0:
        raise DomainError("the limit has lam in denominators; lam must be > 0")
    c = np.exp(beta0) / (1.0 + np.exp(beta0)) ** 2
    a = lam**2 * dist.sigma**2
    c33 = c**2 * np.exp(2 * lam * dist.mu) * (np.exp(2 * a) - np.exp(a)) / lam**2
    det = c**3 * np.exp(3 * a + 4 * lam * dist.mu) * (np.expm1(a) - a) * dist.sigma**2 / lam**4
    return float(c33 / det)


def median_effect_avar(beta1: float, lam: float, mu: float, q: float, cov2) -> float:
    """Delta-method variance of the median effect.

    ``cov2`` is the covariance of ``(beta1_hat, lam_hat)``; the result has
    the same scale (per observation or per sample).  Written with the
    gradient ``(exp((lam-q)mu), mu * effect)`` so it stays finite at
    ``beta1 = 0``.
    """
    cov2 = np.asarray(cov2, dtype=float)
    e = np.exp((lam - q) * mu)
    grad = np.array([e, mu * beta1 * e])
    return float(grad @ cov2 @ grad)


def median_effect_ci(fit, mu: float, q: float, level_z: float = Z975) -> EffectEstimate:
    """Median effect with a delta-method 95% interval from a fitted model.

    ``fit.cov`` (inverse observed information) already carries the sample
    size; ``mu`` is treated as known.
    """
    p = fit.params
    value = median_effect(p, mu, q)
    var = median_effect_avar(p.beta1, p.lam, mu, q, fit.cov[1:, 1:])
    se = float(np.sqrt(var)) if var >= 0 else float("nan")
    return EffectEstimate(float(q), value, se, value - level_z * se, value + level_z * se)


def asd_median_effect(params: ModelParams, dist: LognormalSpec, q: float, avar=None) -> float:
    """Per-observation asymptotic SD of the estimated median effect."""
    avar = avar_params(params, dist) if avar is None else avar
    return float(np.sqrt(median_effect_avar(params.beta1, params.lam, dist.mu, q, avar[1:, 1:])))


def instantaneous_risk_rate(params: ModelParams, x) -> float:
    """Derivative of the risk curve in ``x``: ``beta1 x^(lam-1) p (1-p)``."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("x must be > 0")
    p = expit(params.beta0 + params.beta1 * boxcox(x, params.lam))
    out = params.beta1 * x ** (params.lam - 1.0) * p * (1.0 - p)
    return float(out) if out.ndim == 0 else out


def sample_size_for_se(asd: float, target_se: float = 0.125) -> float:
    """Sample size at which ``asd / sqrt(n)`` equals ``target_se``."""
    return float((asd / target_se) ** 2)
