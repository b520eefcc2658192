"""Model comparison: Hosmer-Lemeshow goodness of fit, stratified
cross-validation and exposure-binned observed risks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .core import Dataset, expit, boxcox
from .exceptions import BoxCoxError, DataValidationError, NumericalError

__all__ = [
    "GofResult",
    "CvResult",
    "RiskBin",
    "hosmer_lemeshow",
    "stratified_kfold",
    "cross_validate",
    "bin_local_risk",
]


@dataclass(frozen=True)
class GofResult:
    groups: int
    statistic: float
    df: int
    p_value: float


@dataclass(frozen=True)
class CvResult:
    folds: int
    mae: float
    mse: float
    fold_assignments: np.ndarray
    predictions: np.ndarray
    # False where the Box-Cox fit stopped at the iteration limit; its
    # estimates are still used for prediction
    fold_converged: np.ndarray


@dataclass(frozen=True)
class RiskBin:
    x_min: float
    x_max: float
    risk: float
    count: int


def hosmer_lemeshow(risks, y, groups: int = 10) -> GofResult:
    """Pearson-form Hosmer-Lemeshow statistic on equal-count risk groups.

    Observations are sorted stably by predicted risk and split into
    ``groups`` bins whose sizes differ by at most one.
    """
    risks = np.asarray(risks, dtype=float)
    y = np.asarray(y, dtype=float)
    if risks.shape != y.shape or risks.ndim != 1:
        raise DataValidationError("risks and y must be 1-d arrays of equal length")
    if groups < 3:
        raise ValueError("need at least 3 groups")
    if y.size < groups:
        raise ValueError("fewer observations than groups")
    order = np.argsort(risks, kind="stable")
    stat = 0.0
    for idx in np.array_split(order, groups):
        ng = idx.size
        e = risks[idx].sum()
        o = y[idx].sum()
        if not (e > 0 and e < ng):
            raise NumericalError("a risk group has expected count 0 for one outcome level")
        stat += (o - e) ** 2 / (e * (1.0 - e / ng))
    df = groups - 2
    return GofResult(int(groups), float(stat), int(df), float(chi2.sf(stat, df)))


def stratified_kfold(y, k: int = 10, seed=0) -> np.ndarray:
    """Fold id per observation; each class is shuffled and dealt round-robin.

    Leftover members of a class go to the lowest-index folds.
    """
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    folds = np.empty(y.size, dtype=np.int64)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if idx.size < k:
            raise DataValidationError(f"class {cls} has {idx.size} members, fewer than k={k}")
        folds[rng.permutation(idx)] = np.arange(idx.size) % k
    return folds


def _fit_predict(train: Dataset, test: Dataset, model):
    from .estimation import fit_mle, irls_fixed_lambda

    converged = True
    if model == "boxcox":
        fit = fit_mle(train)
        p, converged = fit.params, fit.converged
        b0, b1, lam = p.beta0, p.beta1, p.lam
    else:
        lam = float(model)
        b0, b1, _ = irls_fixed_lambda(train, lam)
    return expit(b0 + b1 * boxcox(test.x, lam)), converged


def cross_validate(data: Dataset, model="boxcox", k: int = 10, seed=0) -> CvResult:
    """Out-of-fold MAE and MSE of predicted risks against ``y``.

    ``model`` is ``"boxcox"`` (shape estimated in each training set) or a
    fixed shape ``q``.
    """
    if model != "boxcox":
        model = float(model)
        if not model >= 0:
            raise ValueError("fixed shape must be >= 0")
    folds = stratified_kfold(data.y, k, seed)
    pred = np.empty(data.n)
    ok = np.ones(k, dtype=bool)
    for f in range(k):
        test = folds == f
        try:
            pred[test], ok[f] = _fit_predict(data.subset(~test), data.subset(test), model)
        except BoxCoxError as exc:
            raise type(exc)(f"fold {f} (model {model}): {exc}") from exc
    resid = data.y - pred
    return CvResult(
        int(k), float(np.abs(resid).mean()), float((resid**2).mean()), folds, pred, ok
    )


def bin_local_risk(data: Dataset, bin_size: int = 500) -> list[RiskBin]:
    """Observed risk in consecutive exposure-sorted bins of ``bin_size``.

    There are ``n // bin_size`` bins and the last one absorbs the remainder
    (one bin of all points when ``n < bin_size``).
    """
    if bin_size < 1:
        raise ValueError("bin_size must be >= 1")
    order = np.argsort(data.x, kind="stable")
    xs, ys = data.x[order], data.y[order]
    nb = max(1, data.n // bin_size)
    edges = [i * bin_size for i in range(nb)] + [data.n]
    return [
        RiskBin(float(xs[a]), float(xs[b - 1]), float(ys[a:b].mean()), int(b - a))
        for a, b in zip(edges[:-1], edges[1:])
    ]
