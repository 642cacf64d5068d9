"""Saturated and strata-fixed-effects regression estimators of the ATE vector.

Both regressions are computed from cell aggregates rather than from a dense
design matrix.  The saturated coefficients are differences of cell means.  The
strata-fixed-effects slope comes from partialling the strata dummies out of
the treatment dummies, which leaves a K x K system built from cell counts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import (AteEstimate, Dataset, EstimatorKind, SingularDesignError, StratumCounts,
                   require_estimable)


@dataclass(frozen=True)
class SaturatedFit:
    delta: np.ndarray        # control mean by stratum, shape (S,)
    beta: np.ndarray         # treatment minus control mean, shape (K, S)
    counts: StratumCounts
    cell_means: np.ndarray   # (K+1, S)
    cell_ssr: np.ndarray     # sum of squared residuals by cell, (K+1, S)
    residuals: np.ndarray

    @property
    def n(self) -> int:
        return self.counts.n

    @property
    def theta(self) -> np.ndarray:
        return self.beta @ self.counts.p_hat


@dataclass(frozen=True)
class SfeFit:
    delta: np.ndarray        # stratum intercepts, (S,)
    beta: np.ndarray         # common treatment slopes, (K,)
    counts: StratumCounts
    gram: np.ndarray         # partialled-out treatment dummies cross product, (K, K)
    cell_means: np.ndarray
    cell_ssr: np.ndarray     # residual sum of squares by cell under the SFE fit
    residuals: np.ndarray

    @property
    def n(self) -> int:
        return self.counts.n

    @property
    def theta(self) -> np.ndarray:
        return self.beta


def _cells(dataset: Dataset):
    counts = require_estimable(dataset)
    ncell = (dataset.num_treatments + 1) * dataset.num_strata
    _, means, resid, ss = K.cell_stats(dataset.y, dataset.cell_index, ncell)
    shape = (dataset.num_treatments + 1, dataset.num_strata)
    return counts, means.reshape(shape), resid, ss.reshape(shape)


def fit_saturated(dataset: Dataset) -> SaturatedFit:
    """Regression of Y on strata dummies and all treatment-by-stratum interactions."""
    counts, means, resid, ss = _cells(dataset)
    return SaturatedFit(means[0].copy(), means[1:] - means[0], counts, means, ss, resid)


def ate_saturated(fit: SaturatedFit) -> AteEstimate:
    return AteEstimate(fit.theta, EstimatorKind.SAT, fit.n)


def solve_checked(m: np.ndarray, rhs: np.ndarray, what: str = "design") -> np.ndarray:
    """Solve ``m x = rhs`` after rejecting near-singular ``m`` (threshold 1e-12 x max-norm)."""
    scale = np.max(np.abs(m))
    sv = np.linalg.svd(m, compute_uv=False)
    if scale == 0.0 or sv[-1] <= 1e-12 * scale:
        raise SingularDesignError(f"singular {what} matrix")
    return np.linalg.solve(m, rhs)


def sfe_gram(counts: StratumCounts) -> np.ndarray:
    """sum_s [diag(n_a(s)) - n_a(s) n_b(s) / n(s)] over treatments a, b >= 1."""
    nt = counts.n_as[1:].astype(float)
    n_s = counts.n_s.astype(float)
    return np.diag(nt.sum(axis=1)) - (nt / n_s) @ nt.T


def fit_sfe(dataset: Dataset) -> SfeFit:
    """Regression of Y on strata dummies and treatment dummies (common slopes)."""
    counts, means, resid_cell, ss = _cells(dataset)
    nas = counts.n_as.astype(float)
    n_s = counts.n_s.astype(float)
    sums = means * nas
    y_s = sums.sum(axis=0)
    gram = sfe_gram(counts)
    rhs = (sums[1:] - nas[1:] * (y_s / n_s)).sum(axis=1)
    beta = solve_checked(gram, rhs)
    delta = (y_s - beta @ nas[1:]) / n_s
    fitted = delta[None, :] + np.r_[0.0, beta][:, None]
    resid = dataset.y - fitted.reshape(-1)[dataset.cell_index]
    ncell = nas.size
    ssr = np.bincount(dataset.cell_index, weights=resid * resid, minlength=ncell).reshape(nas.shape)
    return SfeFit(delta, beta, counts, gram, means, ssr, resid)


def ate_sfe(fit: SfeFit) -> AteEstimate:
    return AteEstimate(fit.beta, EstimatorKind.SFE, fit.n)
