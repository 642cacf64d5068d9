"""Chi-square and normal distribution functions in pure Python.

The regularized incomplete gamma uses the power series below x = a + 1 and a
modified-Lentz continued fraction above it.  Both converge to double precision.
"""
from __future__ import annotations

import math

_EPS = 1e-16
_TINY = 1e-300
_MAXIT = 100_000

Z975 = 1.959963984540054


def _log_prefactor(a: float, x: float) -> float:
    return a * math.log(x) - x - math.lgamma(a)


def _gamma_series(a: float, x: float) -> float:
    # lower regularized P(a, x)
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAXIT):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(_log_prefactor(a, x))


def _gamma_cf(a: float, x: float) -> float:
    # upper regularized Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(_log_prefactor(a, x)) * h


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_cf(a, x))


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_cf(a, x))


def chi2_cdf(x: float, df: float) -> float:
    return gammainc_lower(0.5 * df, 0.5 * x)


def chi2_sf(x: float, df: float) -> float:
    return gammainc_upper(0.5 * df, 0.5 * x)


def _chi2_logpdf(x: float, df: float) -> float:
    k = 0.5 * df
    return (k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - math.lgamma(k)


def chi2_quantile(df: float, p: float) -> float:
    """Quantile of chi-square(df): safeguarded Newton on the bracketing interval."""
    if not (df > 0):
        raise ValueError("df must be positive")
    if not (0.0 < p < 1.0):
        raise ValueError("p must lie in (0, 1)")
    lo, hi = 0.0, max(1.0, df)
    while chi2_cdf(hi, df) < p:
        lo, hi = hi, 2.0 * hi
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = chi2_cdf(x, df) - p
        if abs(f) <= 1e-14:
            break
        if f < 0:
            lo = x
        else:
            hi = x
        step = f / math.exp(_chi2_logpdf(x, df))
        nx = x - step
        if not (lo < nx < hi):
            nx = 0.5 * (lo + hi)
        if abs(nx - x) <= 1e-15 * max(1.0, x):
            x = nx
            break
        x = nx
    return x


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def norm_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def noncentral_chi2_sf(x: float, df: float, mu: float, tol: float = 1e-12) -> float:
    """P(chi2_df(mu) > x) as a Poisson(mu/2) mixture of central upper tails.

    Terms are added until the Poisson mass not yet visited is below ``tol``.
    """
    if mu < 0:
        raise ValueError("noncentrality must be non-negative")
    if mu == 0:
        return chi2_sf(x, df)
    lam = 0.5 * mu
    total = 0.0
    mass = 0.0
    j = 0
    while True:
        logw = -lam + j * math.log(lam) - math.lgamma(j + 1.0)
        w = math.exp(logw)
        if w > 0.0:
            total += w * chi2_sf(x, df + 2.0 * j)
            mass += w
        if j > lam and 1.0 - mass < tol:
            break
        j += 1
        if j > 10 * (lam + 100):
            break
    return min(1.0, max(0.0, total))
