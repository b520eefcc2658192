"""Maximum-likelihood fitting of the logistic Box-Cox model.

A profile-likelihood grid over ``lam`` (IRLS for the two coefficients at
each grid point) provides the starting point; BFGS on all three parameters
then polishes it.  The log-likelihood is concave near the optimum, so the
grid seed keeps BFGS in the right basin and BFGS removes the grid
discretisation error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logit

from . import _kernels
from .core import Dataset, ModelParams, boxcox, loglik_derivs
from .exceptions import (
    ConvergenceError,
    DataValidationError,
    NumericalError,
    SeparationError,
    SingularInformationError,
)

log = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_GRID",
    "PLProfile",
    "FitResult",
    "FixedLambdaFit",
    "irls_fixed_lambda",
    "fit_fixed_lambda",
    "profile_likelihood",
    "fit_mle",
]

DEFAULT_GRID = np.round(np.arange(51) * 0.05, 10)
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200

IRLS_MAX_ITER = 50
IRLS_TOL = 1e-10
SEPARATION_LIMIT = 1e3

ARMIJO_C1 = 1e-4


@dataclass(frozen=True)
class PLProfile:
    lambda_grid: np.ndarray
    profile_loglik: np.ndarray
    argmax_index: int
    coefs: np.ndarray = field(repr=False)

    @property
    def lam_hat(self) -> float:
        return float(self.lambda_grid[self.argmax_index])

    @property
    def max_loglik(self) -> float:
        return float(self.profile_loglik[self.argmax_index])

    def seed(self) -> ModelParams:
        b0, b1 = self.coefs[self.argmax_index]
        return ModelParams(float(b0), float(b1), self.lam_hat)


@dataclass(frozen=True)
class FitResult:
    """Output of :func:`fit_mle`.

    ``cov`` is the inverse observed information (already on the n-sample
    scale) and ``se`` its diagonal square root.  When ``boundary`` is set the
    optimum sits at ``lam = 0`` and ``se[2]`` comes from the curvature of the
    profile likelihood rather than from the Hessian.
    """

    params: ModelParams
    se: np.ndarray
    cov: np.ndarray
    loglik: float
    aic: float
    converged: bool
    iterations: int
    grad_norm: float
    pl_seed: ModelParams
    n: int
    boundary: bool = False
    message: str = ""
    line_search: tuple = field(default=(), repr=False, compare=False)


@dataclass(frozen=True)
class FixedLambdaFit:
    """Two-coefficient logistic fit on ``boxcox(x, lam)`` with ``lam`` known."""

    lam: float
    beta0: float
    beta1: float
    se: np.ndarray
    loglik: float
    aic: float
    n: int

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.beta0, self.beta1, self.lam)


def _require_both_classes(y):
    m = float(np.mean(y))
    if m <= 0.0 or m >= 1.0:
        raise SeparationError("outcome is constant; logistic coefficients are not identified")
    return m


def _check_separation(v, y, lam):
    # with one predictor the MLE exists iff no threshold on v splits the classes
    v1, v0 = v[y == 1], v[y == 0]
    if v0.max() <= v1.min() or v1.max() <= v0.min():
        raise SeparationError(f"outcome is (quasi-)separated by the predictor at lam={lam}")


def _irls_raw(data: Dataset, lam: float):
    ybar = _require_both_classes(data.y)
    v = boxcox(data.x, lam)
    _check_separation(v, data.y, lam)
    out = _kernels.irls(v, data.y, logit(ybar), 0.0, IRLS_MAX_ITER, IRLS_TOL, SEPARATION_LIMIT)
    b0, b1, ll, it, status = out[:5]
    if status == _kernels.IRLS_SEPARATION:
        raise SeparationError(f"coefficients diverged at lam={lam} (|beta| > {SEPARATION_LIMIT:g})")
    if status == _kernels.IRLS_SINGULAR:
        raise SingularInformationError(f"X'WX singular at lam={lam}")
    if status == _kernels.IRLS_MAXITER:
        raise ConvergenceError(f"IRLS did not converge in {IRLS_MAX_ITER} iterations at lam={lam}")
    return out


def irls_fixed_lambda(data: Dataset, lam: float) -> tuple[float, float, float]:
    """Logistic MLE of ``(beta0, beta1)`` with predictor ``boxcox(x, lam)``.

    Returns ``(beta0, beta1, loglik)``.
    """
    b0, b1, ll = _irls_raw(data, lam)[:3]
    return float(b0), float(b1), float(ll)


def fit_fixed_lambda(data: Dataset, lam: float) -> FixedLambdaFit:
    """Same as :func:`irls_fixed_lambda` plus model-based SEs and AIC."""
    b0, b1, ll, _, _, i00, i01, i11 = _irls_raw(data, lam)
    cov = np.linalg.inv(np.array([[i00, i01], [i01, i11]]))
    return FixedLambdaFit(
        lam=float(lam),
        beta0=float(b0),
        beta1=float(b1),
        se=np.sqrt(np.diag(cov)),
        loglik=float(ll),
        aic=float(2 * 2 - 2 * ll),
        n=data.n,
    )


def profile_likelihood(data: Dataset, grid=None) -> PLProfile:
    """Maximise over ``(beta0, beta1)`` at each ``lam`` in ``grid``.

    Cells whose IRLS fails are recorded as ``-inf``.  Ties go to the
    smallest ``lam``.
    """
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("profile grid is empty")
    if np.any(grid < 0):
        raise ValueError("profile grid entries must be >= 0")
    _require_both_classes(data.y)
    prof = np.full(grid.size, -np.inf)
    coefs = np.full((grid.size, 2), np.nan)
    for k, lam in enumerate(grid):
        try:
            b0, b1, ll = irls_fixed_lambda(data, lam)
        except NumericalError as exc:
            log.debug("profile cell lam=%g failed: %s", lam, exc)
            continue
        prof[k] = ll
        coefs[k] = b0, b1
    best = np.max(prof)
    if not np.isfinite(best):
        raise NumericalError("every profile-likelihood cell failed")
    ties = np.flatnonzero(prof == best)
    idx = int(ties[np.argmin(grid[ties])])
    return PLProfile(grid.copy(), prof, idx, coefs)


def _evaluate(data, theta, order=1):
    ll, g, h = _kernels.loglik_derivs(data.lx, data.y, theta[0], theta[1], theta[2], order)
    if not np.isfinite(ll) or not np.all(np.isfinite(g)):
        return -np.inf, g, h
    return ll, g.copy(), h.copy()


def _projected(theta, g):
    pg = g.copy()
    if theta[2] <= 0.0 and pg[2] < 0.0:
        pg[2] = 0.0
    return pg


def _bfgs(data: Dataset, theta, tol, max_iter):
    """Maximise the log-likelihood from ``theta`` subject to ``lam >= 0``.

    Works on ``-loglik/n`` internally; the stopping rule is on the
    unscaled gradient.
    """
    n = data.n
    theta = np.asarray(theta, dtype=float).copy()
    ll, g, _ = _evaluate(data, theta)
    if not np.isfinite(ll):
        raise NumericalError("log-likelihood is not finite at the starting point")
    hinv = np.eye(3)
    scaled = False
    trace = []
    converged = False
    boundary = False
    message = "iteration limit reached"
    it = 0
    for it in range(1, max_iter + 1):
        pg = _projected(theta, g)
        if np.max(np.abs(pg)) < tol * (1.0 + abs(ll)):
            converged = True
            it -= 1
            message = "gradient tolerance met"
            break
        d = hinv @ (g / n)
        if theta[2] <= 0.0 and d[2] < 0.0:
            d[2] = 0.0
        if d @ g <= 0.0:
            hinv = np.eye(3)
            scaled = False
            d = g / n
            if theta[2] <= 0.0 and d[2] < 0.0:
                d[2] = 0.0
        t = 1.0
        accepted = False
        while t > 1e-14:
            trial = theta + t * d
            projected = trial[2] < 0.0
            if projected:
                trial[2] = 0.0
            ll_t, g_t, _ = _evaluate(data, trial)
            slope = g @ (trial - theta)
            if np.isfinite(ll_t) and ll_t >= ll + ARMIJO_C1 * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            message = "line search failed"
            break
        trace.append((ll, ll_t, slope))
        s = trial - theta
        yv = (g - g_t) / n
        theta, ll, g = trial, ll_t, g_t
        if projected:
            # hit lam = 0: finish the coefficients exactly, then decide whether
            # the boundary is optimal
            try:
                b0, b1, ll0 = irls_fixed_lambda(data, 0.0)
            except NumericalError:
                b0, b1, ll0 = theta[0], theta[1], -np.inf
            if ll0 >= ll:
                theta = np.array([b0, b1, 0.0])
                ll, g, _ = _evaluate(data, theta)
            hinv = np.eye(3)
            scaled = False
            if g[2] <= 0.0 and np.max(np.abs(g[:2])) < tol * (1.0 + abs(ll)):
                converged = True
                boundary = True
                message = "optimum on the lam = 0 boundary"
                break
            continue
        sy = s @ yv
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if not scaled:
                hinv = np.eye(3) * (sy / (yv @ yv))
                scaled = True
            rho = 1.0 / sy
            v = np.eye(3) - rho * np.outer(s, yv)
            hinv = v @ hinv @ v.T + rho * np.outer(s, s)
    else:
        pg = _projected(theta, g)
        converged = bool(np.max(np.abs(pg)) < tol * (1.0 + abs(ll)))
        if converged:
            message = "gradient tolerance met"
    if converged and theta[2] <= 0.0 and g[2] <= 0.0:
        boundary = True
        message = "optimum on the lam = 0 boundary"
    grad_norm = float(np.max(np.abs(_projected(theta, g))))
    return theta, ll, converged, it, grad_norm, boundary, message, tuple(trace)


def _newton_polish(data: Dataset, theta, ll, steps: int = 3):
    """A few full Newton steps from a converged interior BFGS iterate.

    BFGS stops on a relative gradient test; near a strict interior maximum
    Newton converges quadratically and removes the remaining error at the
    cost of a couple of Hessian evaluations.  A step is kept only if it
    stays in ``lam >= 0`` and does not lower the log-likelihood.
    """
    for _ in range(steps):
        _, g, h = _kernels.loglik_derivs(data.lx, data.y, *theta, 2)
        try:
            np.linalg.cholesky(-h)
            step = np.linalg.solve(-h, g)
        except np.linalg.LinAlgError:
            break
        trial = theta + step
        if trial[2] < 0.0:
            break
        ll_t = _evaluate(data, trial, order=0)[0]
        if not ll_t >= ll:
            break
        theta, ll = trial, ll_t
        if np.max(np.abs(step)) < 1e-12 * (1.0 + np.max(np.abs(theta))):
            break
    return theta, ll


def _boundary_lambda_se(data: Dataset, h: float = 0.05) -> float:
    lls = []
    for lam in (0.0, h, 2 * h):
        try:
            lls.append(irls_fixed_lambda(data, lam)[2])
        except NumericalError:
            return float("nan")
    curv = (lls[0] - 2 * lls[1] + lls[2]) / h**2
    return float(np.sqrt(-1.0 / curv)) if curv < 0 else float("nan")


def fit_mle(
    data: Dataset,
    *,
    grid=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    start: ModelParams | None = None,
) -> FitResult:
    """Fit ``(beta0, beta1, lam)`` by maximum likelihood.

    Without ``start`` the profile likelihood on ``grid`` (default
    ``0, 0.05, ..., 2.5``) seeds BFGS.  Convergence means the projected
    gradient max-norm fell below ``tol * (1 + |loglik|)``.  Non-convergence
    is reported through ``converged``/``message`` rather than raised.

    Raises
    ------
    SingularInformationError
        If the fit converged to an interior point where the observed
        information is not positive definite.
    """
    if np.all(data.y == data.y[0]):
        raise DataValidationError("outcome is constant")
    if start is None:
        seed = profile_likelihood(data, grid).seed()
    else:
        seed = ModelParams(start.beta0, start.beta1, max(start.lam, 0.0))
    theta, ll, converged, iters, gnorm, boundary, message, trace = _bfgs(
        data, seed.as_array(), tol, max_iter
    )
    if converged and not boundary:
        theta, ll = _newton_polish(data, theta, ll)
    params = ModelParams.from_array(theta)
    _, _, h = loglik_derivs(params, data)
    cov = np.full((3, 3), np.nan)
    if boundary:
        try:
            cov[:2, :2] = np.linalg.inv(-h[:2, :2])
        except np.linalg.LinAlgError:
            pass
        cov[2, :2] = cov[:2, 2] = 0.0
        cov[2, 2] = _boundary_lambda_se(data) ** 2
    else:
        try:
            np.linalg.cholesky(-h)
            cov = np.linalg.inv(-h)
        except np.linalg.LinAlgError:
            if converged:
                raise SingularInformationError(
                    "observed information is not positive definite at the optimum"
                ) from None
    cov = 0.5 * (cov + cov.T)
    return FitResult(
        params=params,
        se=np.sqrt(np.diag(cov)),
        cov=cov,
        loglik=float(ll),
        aic=float(2 * 3 - 2 * ll),
        converged=converged,
        iterations=iters,
        grad_norm=gnorm,
        pl_seed=seed,
        n=data.n,
        boundary=boundary,
        message=message,
        line_search=trace,
    )
