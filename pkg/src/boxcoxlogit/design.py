"""Factorial simulation design and the bias/RMSE study.

Each cell fixes the exposure spread ``sigma``, the shape ``lam``, the risk
``p_low`` at the 5th percentile of exposure and the ratio ``r`` of the risks
at the 95th and 5th percentiles.  The 95th percentile of exposure is pinned
at 1, where every Box-Cox transform vanishes, which makes the mapping to
``(beta0, beta1)`` closed form.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.special import expit, logit

from ._parallel import pmap
from .core import Dataset, LognormalSpec, ModelParams, boxcox
from .exceptions import DomainError, NumericalError

__all__ = [
    "Z95",
    "SIGMAS",
    "LAMBDAS",
    "P_LOWS",
    "RATIOS",
    "SettingSpec",
    "SimulationReport",
    "table1_settings",
    "parse_setting_id",
    "derive_truth",
    "generate_dataset",
    "replicate_seed",
    "run_bias_study",
]

# Phi^{-1}(0.95) at full double precision
Z95 = 1.6448536269514722

SIGMAS = (0.5, 1.0, 2.0)
LAMBDAS = (0.0, 0.5, 1.0, 2.0)
P_LOWS = (0.02, 0.1)
RATIOS = (1.1, 2.0, 5.0)


def _code(v: float) -> str:
    s = f"{v:g}"
    return "0" + s[2:] if s.startswith("0.") else s.replace(".", "p")


def _offtable(v: float) -> str:
    # always carries a "p" so it cannot be read as a level index
    s = f"{v:g}"
    return s.replace(".", "p") if "." in s else s + "p0"


@dataclass(frozen=True)
class SettingSpec:
    sigma: float
    lam: float
    p_low: float
    r: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("sigma must be > 0")
        if not self.lam >= 0:
            raise DomainError("lambda must be >= 0")
        if not 0 < self.p_low < 1:
            raise DomainError("p_low must lie in (0, 1)")
        if not self.r * self.p_low < 1:
            raise DomainError(f"r * p_low = {self.r * self.p_low:g} is not a probability")

    @property
    def id(self) -> str:
        """Identifier such as ``P1-R2-L05-S1``.

        Design levels map to their index (P1/P2, R1..R3); off-table values
        are spelled out with ``p`` as the decimal point, e.g. ``P0p05`` or
        ``R3p0``.
        """
        p = f"P{P_LOWS.index(self.p_low) + 1}" if self.p_low in P_LOWS else f"P{_offtable(self.p_low)}"
        r = f"R{RATIOS.index(self.r) + 1}" if self.r in RATIOS else f"R{_offtable(self.r)}"
        return f"{p}-{r}-L{_code(self.lam)}-S{_code(self.sigma)}"

    def with_lambda(self, lam: float) -> "SettingSpec":
        return SettingSpec(self.sigma, float(lam), self.p_low, self.r)

    def truth(self):
        return derive_truth(self)


def _uncode(s: str) -> float:
    if s.startswith("0") and len(s) > 1:
        return float("0." + s[1:])
    return float(s.replace("p", "."))


def _offtable_value(s: str) -> float:
    if "p" not in s:
        raise ValueError
    return float(s.replace("p", "."))


def parse_setting_id(text: str) -> SettingSpec:
    """Inverse of :attr:`SettingSpec.id`."""
    try:
        p, r, lam, sig = text.strip().split("-")
        if p[0] != "P" or r[0] != "R" or lam[0] != "L" or sig[0] != "S":
            raise ValueError
        p_low = P_LOWS[int(p[1:]) - 1] if p[1:] in ("1", "2") else _offtable_value(p[1:])
        ratio = RATIOS[int(r[1:]) - 1] if r[1:] in ("1", "2", "3") else _offtable_value(r[1:])
        return SettingSpec(_uncode(sig[1:]), _uncode(lam[1:]), p_low, ratio)
    except (ValueError, IndexError):
        raise ValueError(f"not a setting id: {text!r}") from None


def table1_settings() -> list[SettingSpec]:
    """All 72 cells, ordered sigma, lam, p_low, r."""
    return [SettingSpec(*c) for c in itertools.product(SIGMAS, LAMBDAS, P_LOWS, RATIOS)]


def derive_truth(setting: SettingSpec) -> tuple[ModelParams, LognormalSpec]:
    """Map a design cell to model parameters and exposure distribution.

    The risk at ``x = 1`` (95th percentile) is ``r * p_low`` and the risk at
    ``exp(-2 * Z95 * sigma)`` (5th percentile) is ``p_low``.
    """
    mu = -Z95 * setting.sigma
    x05 = np.exp(mu - Z95 * setting.sigma)
    beta0 = float(logit(setting.r * setting.p_low))
    beta1 = float((logit(setting.p_low) - beta0) / boxcox(x05, setting.lam))
    return ModelParams(beta0, beta1, setting.lam), LognormalSpec(mu, setting.sigma)


def replicate_seed(seed: int, k: int) -> np.random.SeedSequence:
    """Independent stream for replicate ``k``, independent of scheduling."""
    return np.random.SeedSequence([int(seed), int(k)])


def generate_dataset(truth: ModelParams, dist: LognormalSpec, n: int, seed) -> Dataset:
    """Draw ``x ~ LN(mu, sigma^2)`` and ``y ~ Bernoulli(model risk)``.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = np.exp(dist.mu + dist.sigma * rng.standard_normal(n))
    p = expit(truth.beta0 + truth.beta1 * boxcox(x, truth.lam))
    y = (rng.random(n) < p).astype(float)
    return Dataset(x, y)


@dataclass(frozen=True)
class SimulationReport:
    setting: SettingSpec
    replicates: int
    n_per_replicate: int
    bias: np.ndarray
    rmse: np.ndarray
    convergence_rate: float
    estimates: np.ndarray  # (replicates, 3), NaN rows for failed fits
    converged: np.ndarray


def _one_replicate(k, truth, dist, n, seed, fit_kwargs):
    from .estimation import fit_mle

    data = generate_dataset(truth, dist, n, replicate_seed(seed, k))
    try:
        fit = fit_mle(data, **fit_kwargs)
    except (NumericalError, ValueError):
        return np.full(3, np.nan), False
    return fit.params.as_array(), bool(fit.converged)


def run_bias_study(
    setting: SettingSpec, replicates: int, n: int, seed: int, **fit_kwargs
) -> SimulationReport:
    """Fit ``replicates`` simulated datasets and summarise bias and RMSE.

    Only converged fits enter the summaries; the fraction is reported as
    ``convergence_rate``.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    truth, dist = derive_truth(setting)
    work = partial(_one_replicate, truth=truth, dist=dist, n=n, seed=seed, fit_kwargs=fit_kwargs)
    out = pmap(work, range(replicates))
    est = np.array([o[0] for o in out])
    ok = np.array([o[1] for o in out])
    err = est[ok] - truth.as_array()
    if ok.any():
        bias = err.mean(axis=0)
        rmse = np.sqrt((err**2).mean(axis=0))
    else:
        bias = rmse = np.full(3, np.nan)
    return SimulationReport(
        setting=setting,
        replicates=replicates,
        n_per_replicate=n,
        bias=bias,
        rmse=rmse,
        convergence_rate=float(ok.mean()),
        estimates=est,
        converged=ok,
    )
