"""Wald tests of linear hypotheses and coefficient-level reports."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import AteEstimate, Dataset, LinearHypothesis, SingularStudentizerError
from .special import Z975, chi2_quantile, chi2_sf, norm_sf
from .variance import CovarianceEstimate

__all__ = ["TestResult", "CoefficientReport", "wald_test", "coefficient_report",
           "two_sample_ttest", "critical_value", "wald_statistic", "chi2_quantile"]

COND_LIMIT = 1e12


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this class

    statistic: float
    critical_value: float
    p_value: float
    reject: bool
    df: int


@dataclass(frozen=True)
class CoefficientReport:
    estimate: float
    std_error: float
    z_stat: float
    p_value: float
    ci_low: float
    ci_high: float


@lru_cache(maxsize=256)
def critical_value(df: int, alpha: float) -> float:
    return chi2_quantile(df, 1.0 - alpha)


def _matrix(v) -> np.ndarray:
    return v.matrix if isinstance(v, CovarianceEstimate) else np.atleast_2d(np.asarray(v, dtype=float))


def wald_statistic(theta: np.ndarray, vm: np.ndarray, hyp: LinearHypothesis, n: int) -> float:
    """The Wald statistic alone; raises if Psi V Psi' is singular or ill-conditioned."""
    diff = hyp.psi @ theta - hyp.c
    mid = hyp.psi @ vm @ hyp.psi.T
    if mid.shape == (1, 1):
        m = mid[0, 0]
        if not (np.isfinite(m) and m > 0):
            raise SingularStudentizerError("Psi V Psi' is singular")
        return float(n * diff[0] * diff[0] / m)
    if not np.all(np.isfinite(mid)) or np.linalg.cond(mid) > COND_LIMIT:
        raise SingularStudentizerError("Psi V Psi' is singular or ill-conditioned")
    return float(n * diff @ np.linalg.solve(mid, diff))


def wald_test(est: AteEstimate | np.ndarray, v: CovarianceEstimate | np.ndarray,
              hyp: LinearHypothesis, n: int | None = None) -> TestResult:
    """T = n (Psi theta - c)' (Psi V Psi')^{-1} (Psi theta - c), rejecting above chi2_{r, 1-alpha}."""
    if isinstance(est, AteEstimate):
        theta, n = est.theta, est.n
    else:
        theta = np.asarray(est, dtype=float).ravel()
        if n is None:
            raise ValueError("n is required when theta is passed as an array")
    vm = _matrix(v)
    if vm.shape != (theta.size, theta.size) or hyp.psi.shape[1] != theta.size:
        raise ValueError("dimensions of theta, V and Psi disagree")
    stat = wald_statistic(theta, vm, hyp, n)
    r = hyp.rank
    crit = critical_value(r, hyp.alpha)
    return TestResult(stat, crit, chi2_sf(stat, r), stat > crit, r)


def coefficient_report(theta: AteEstimate | np.ndarray, v: CovarianceEstimate | np.ndarray,
                       index: int, n: int | None = None, z: float = Z975) -> CoefficientReport:
    """Normal-reference report for treatment ``index`` (1-based)."""
    if isinstance(theta, AteEstimate):
        th, n = theta.theta, theta.n
    else:
        th = np.asarray(theta, dtype=float).ravel()
        if n is None:
            raise ValueError("n is required when theta is passed as an array")
    vm = _matrix(v)
    if not (1 <= index <= th.size):
        raise ValueError("index out of range")
    var = vm[index - 1, index - 1]
    if not var > 0:
        raise SingularStudentizerError("non-positive variance for the requested coefficient")
    se = math.sqrt(var / n)
    est = float(th[index - 1])
    zs = est / se
    return CoefficientReport(est, se, zs, 2.0 * norm_sf(abs(zs)), est - z * se, est + z * se)


def two_sample_ttest(dataset: Dataset, a: int = 1, flavor: str = "pooled",
                     z: float = Z975) -> CoefficientReport:
    """Difference in means between arm ``a`` and control, ignoring strata.

    ``flavor`` is "pooled" (equal variances) or "unequal" (Welch-type standard error).
    """
    y1 = dataset.y[dataset.a == a]
    y0 = dataset.y[dataset.a == 0]
    n1, n0 = y1.size, y0.size
    if n1 < 2 or n0 < 2:
        raise ValueError("each arm needs at least two observations")
    diff = float(y1.mean() - y0.mean())
    v1, v0 = y1.var(ddof=1), y0.var(ddof=1)
    if flavor == "pooled":
        sp2 = ((n1 - 1) * v1 + (n0 - 1) * v0) / (n1 + n0 - 2)
        se = math.sqrt(sp2 * (1.0 / n1 + 1.0 / n0))
    elif flavor == "unequal":
        se = math.sqrt(v1 / n1 + v0 / n0)
    else:
        raise ValueError("flavor must be 'pooled' or 'unequal'")
    if not se > 0:
        raise SingularStudentizerError("zero standard error")
    zs = diff / se
    return CoefficientReport(diff, se, zs, 2.0 * norm_sf(abs(zs)), diff - z * se, diff + z * se)
