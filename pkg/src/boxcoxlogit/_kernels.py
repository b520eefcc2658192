"""Hot inner loops, compiled with numba when available.

Every kernel exists twice: an ``@njit`` loop version and a vectorised numpy
version with identical semantics.  The public names at the bottom of the
module are bound to one or the other at import time.  Set
``BOXCOX_NUMBA=0`` in the environment to force the numpy path (useful for
debugging and for the benchmark in ``benchmarks/bench_kernels.py``).

Kernels work on ``lx = log(x)`` rather than ``x`` so that the Box-Cox
transform and its lambda-derivatives can be written in terms of
``t = lam * lx`` without loss of precision near ``lam = 0``.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


USE_NUMBA = HAVE_NUMBA and os.environ.get("BOXCOX_NUMBA", "1").lower() not in (
    "0",
    "false",
    "no",
    "off",
)

# |t| below this uses the power series; above it the closed forms are stable
SERIES_CUTOFF = 1.0
_N_TERMS = 26
_INV_FACT = np.array([1.0 / math.factorial(j + 1) for j in range(_N_TERMS)])

IRLS_OK = 0
IRLS_MAXITER = 1
IRLS_SEPARATION = 2
IRLS_SINGULAR = 3


# --------------------------------------------------------------------------
# numba versions
# --------------------------------------------------------------------------


@njit(cache=True)
def _nb_bc_scalar(lx, lam):
    t = lam * lx
    if abs(t) < SERIES_CUTOFF:
        # f1 = sum t^j/(j+1)!, f2 = sum j t^(j-1)/(j+1)!, f3 = sum j(j-1) t^(j-2)/(j+1)!
        f1 = 0.0
        f2 = 0.0
        f3 = 0.0
        for j in range(_N_TERMS - 1, -1, -1):
            c = _INV_FACT[j]
            f1 = f1 * t + c
            if j >= 1:
                f2 = f2 * t + j * c
            if j >= 2:
                f3 = f3 * t + j * (j - 1) * c
    else:
        e = math.exp(t)
        f1 = (e - 1.0) / t
        f2 = (t * e - e + 1.0) / (t * t)
        f3 = (e * (t * t - 2.0 * t + 2.0) - 2.0) / (t * t * t)
    return lx * f1, lx * lx * f2, lx * lx * lx * f3


@njit(cache=True)
def _nb_boxcox_terms(lx, lam):
    n = lx.shape[0]
    nu = np.empty(n)
    d1 = np.empty(n)
    d2 = np.empty(n)
    for i in range(n):
        a, b, c = _nb_bc_scalar(lx[i], lam)
        nu[i] = a
        d1[i] = b
        d2[i] = c
    return nu, d1, d2


@njit(cache=True)
def _nb_log1pexp(eta):
    if eta > 0.0:
        return eta + math.log1p(math.exp(-eta))
    return math.log1p(math.exp(eta))


@njit(cache=True)
def _nb_expit_w(eta):
    # returns p and p*(1-p) without cancellation
    if eta >= 0.0:
        e = math.exp(-eta)
        p = 1.0 / (1.0 + e)
        w = e / ((1.0 + e) * (1.0 + e))
    else:
        e = math.exp(eta)
        p = e / (1.0 + e)
        w = e / ((1.0 + e) * (1.0 + e))
    return p, w


@njit(cache=True)
def _nb_loglik_derivs(lx, y, b0, b1, lam, order):
    n = lx.shape[0]
    ll = 0.0
    g = np.zeros(3)
    h = np.zeros((3, 3))
    for i in range(n):
        nu, d1, d2 = _nb_bc_scalar(lx[i], lam)
        eta = b0 + b1 * nu
        ll += y[i] * eta - _nb_log1pexp(eta)
        if order >= 1:
            p, w = _nb_expit_w(eta)
            r = y[i] - p
            a = b1 * d1
            g[0] += r
            g[1] += r * nu
            g[2] += r * a
            if order >= 2:
                h[0, 0] -= w
                h[0, 1] -= w * nu
                h[0, 2] -= w * a
                h[1, 1] -= w * nu * nu
                h[1, 2] += -w * nu * a + r * d1
                h[2, 2] += -w * a * a + r * b1 * d2
    h[1, 0] = h[0, 1]
    h[2, 0] = h[0, 2]
    h[2, 1] = h[1, 2]
    return ll, g, h


@njit(cache=True)
def _nb_logit_pass(v, y, b0, b1):
    ll = 0.0
    g0 = 0.0
    g1 = 0.0
    i00 = 0.0
    i01 = 0.0
    i11 = 0.0
    for i in range(v.shape[0]):
        eta = b0 + b1 * v[i]
        ll += y[i] * eta - _nb_log1pexp(eta)
        p, w = _nb_expit_w(eta)
        r = y[i] - p
        g0 += r
        g1 += r * v[i]
        i00 += w
        i01 += w * v[i]
        i11 += w * v[i] * v[i]
    return ll, g0, g1, i00, i01, i11


@njit(cache=True)
def _nb_irls(v, y, b0, b1, max_iter, tol, sep_limit):
    ll, g0, g1, i00, i01, i11 = _nb_logit_pass(v, y, b0, b1)
    status = IRLS_MAXITER
    it = 0
    while it < max_iter:
        it += 1
        det = i00 * i11 - i01 * i01
        if not det > 0.0:
            status = IRLS_SINGULAR
            break
        s0 = (i11 * g0 - i01 * g1) / det
        s1 = (-i01 * g0 + i00 * g1) / det
        t = 1.0
        while True:
            n0 = b0 + t * s0
            n1 = b1 + t * s1
            nll, ng0, ng1, n00, n01, n11 = _nb_logit_pass(v, y, n0, n1)
            if nll >= ll - 1e-12 * abs(ll) or t < 1e-8:
                break
            t *= 0.5
        step = max(abs(n0 - b0), abs(n1 - b1))
        b0, b1 = n0, n1
        ll, g0, g1, i00, i01, i11 = nll, ng0, ng1, n00, n01, n11
        if abs(b0) > sep_limit or abs(b1) > sep_limit:
            status = IRLS_SEPARATION
            break
        if step < tol:
            status = IRLS_OK
            break
    return b0, b1, ll, it, status, i00, i01, i11


# --------------------------------------------------------------------------
# numpy versions
# --------------------------------------------------------------------------


def _np_boxcox_terms(lx, lam):
    lx = np.asarray(lx, dtype=float)
    t = lam * lx
    small = np.abs(t) < SERIES_CUTOFF
    f1 = np.empty_like(t)
    f2 = np.empty_like(t)
    f3 = np.empty_like(t)
    if small.any():
        ts = t[small]
        a1 = np.zeros_like(ts)
        a2 = np.zeros_like(ts)
        a3 = np.zeros_like(ts)
        for j in range(_N_TERMS - 1, -1, -1):
            c = _INV_FACT[j]
            a1 = a1 * ts + c
            if j >= 1:
                a2 = a2 * ts + j * c
            if j >= 2:
                a3 = a3 * ts + j * (j - 1) * c
        f1[small] = a1
        f2[small] = a2
        f3[small] = a3
    big = ~small
    if big.any():
        tb = t[big]
        e = np.exp(tb)
        f1[big] = (e - 1.0) / tb
        f2[big] = (tb * e - e + 1.0) / tb**2
        f3[big] = (e * (tb * tb - 2.0 * tb + 2.0) - 2.0) / tb**3
    return lx * f1, lx**2 * f2, lx**3 * f3


def _np_expit_w(eta):
    e = np.exp(-np.abs(eta))
    p = np.where(eta >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    w = e / (1.0 + e) ** 2
    return p, w


def _np_loglik_derivs(lx, y, b0, b1, lam, order):
    nu, d1, d2 = _np_boxcox_terms(lx, lam)
    eta = b0 + b1 * nu
    ll = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    g = np.zeros(3)
    h = np.zeros((3, 3))
    if order >= 1:
        p, w = _np_expit_w(eta)
        r = y - p
        a = b1 * d1
        g[:] = (r.sum(), (r * nu).sum(), (r * a).sum())
        if order >= 2:
            h[0, 0] = -w.sum()
            h[0, 1] = -(w * nu).sum()
            h[0, 2] = -(w * a).sum()
            h[1, 1] = -(w * nu * nu).sum()
            h[1, 2] = (-w * nu * a + r * d1).sum()
            h[2, 2] = (-w * a * a + r * b1 * d2).sum()
            h[1, 0] = h[0, 1]
            h[2, 0] = h[0, 2]
            h[2, 1] = h[1, 2]
    return ll, g, h


def _np_logit_pass(v, y, b0, b1):
    eta = b0 + b1 * v
    ll = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    p, w = _np_expit_w(eta)
    r = y - p
    return ll, r.sum(), (r * v).sum(), w.sum(), (w * v).sum(), (w * v * v).sum()


def _np_irls(v, y, b0, b1, max_iter, tol, sep_limit):
    ll, g0, g1, i00, i01, i11 = _np_logit_pass(v, y, b0, b1)
    status = IRLS_MAXITER
    it = 0
    while it < max_iter:
        it += 1
        det = i00 * i11 - i01 * i01
        if not det > 0.0:
            status = IRLS_SINGULAR
            break
        s0 = (i11 * g0 - i01 * g1) / det
        s1 = (-i01 * g0 + i00 * g1) / det
        t = 1.0
        while True:
            n0 = b0 + t * s0
            n1 = b1 + t * s1
            nll, ng0, ng1, n00, n01, n11 = _np_logit_pass(v, y, n0, n1)
            if nll >= ll - 1e-12 * abs(ll) or t < 1e-8:
                break
            t *= 0.5
        step = max(abs(n0 - b0), abs(n1 - b1))
        b0, b1 = n0, n1
        ll, g0, g1, i00, i01, i11 = nll, ng0, ng1, n00, n01, n11
        if abs(b0) > sep_limit or abs(b1) > sep_limit:
            status = IRLS_SEPARATION
            break
        if step < tol:
            status = IRLS_OK
            break
    return b0, b1, ll, it, status, i00, i01, i11


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

NUMBA_KERNELS = {
    "boxcox_terms": _nb_boxcox_terms,
    "loglik_derivs": _nb_loglik_derivs,
    "irls": _nb_irls,
}
NUMPY_KERNELS = {
    "boxcox_terms": _np_boxcox_terms,
    "loglik_derivs": _np_loglik_derivs,
    "irls": _np_irls,
}

_active = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS


def boxcox_terms(lx, lam):
    """Return ``(nu, dnu/dlam, d2nu/dlam2)`` for an array of log-exposures."""
    return _active["boxcox_terms"](np.ascontiguousarray(lx, dtype=np.float64), float(lam))


def loglik_derivs(lx, y, b0, b1, lam, order=2):
    """Log-likelihood and (optionally) score and Hessian in one pass.

    ``order`` 0 skips the derivatives, 1 skips the Hessian.
    """
    return _active["loglik_derivs"](
        np.ascontiguousarray(lx, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        float(b0),
        float(b1),
        float(lam),
        int(order),
    )


def irls(v, y, b0, b1, max_iter=50, tol=1e-10, sep_limit=1e3):
    """Damped Newton (IRLS) for a two-coefficient logistic fit.

    ``y`` may be fractional.  Returns ``(b0, b1, loglik, iterations, status,
    i00, i01, i11)`` where the ``i`` terms are the entries of X'WX at the
    final iterate.
    """
    return _active["irls"](
        np.ascontiguousarray(v, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        float(b0),
        float(b1),
        int(max_iter),
        float(tol),
        float(sep_limit),
    )
