"""Variance estimators for sqrt(n)(theta_hat - theta), and their population counterparts.

Sample estimators work from cell aggregates of a fit.  Population functions
take a :class:`~carinf.dgp.PopulationMoments` and return the asymptotic
variance of each estimator (``v_analytic_*``) or the probability limit of an
estimator that is not consistent for it (``limit_*``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import BalanceProfile, TargetProportions, VarianceKind
from .estimators import SaturatedFit, SfeFit

__all__ = [
    "CovarianceEstimate", "v_ho_saturated", "v_hc_saturated", "v_h_hat", "v_new_saturated",
    "v_ho_sfe", "v_hc_sfe", "v_a_hat", "v_new_sfe", "estimate", "estimate_all", "v_h_population",
    "v_y_population", "v_a_population", "v_analytic_sat", "v_analytic_sfe", "limit_ho_sat",
    "limit_hc_sat", "limit_ho_sfe", "limit_hc_sfe", "varsigma_h2", "varsigma_y2", "varsigma_a2",
    "hc_sfe_limit_scalar",
]


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    kind: VarianceKind
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ValueError("covariance matrix must be square")
        scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
        if np.max(np.abs(m - m.T)) > 1e-10 * scale:
            raise ValueError("covariance matrix must be symmetric")
        object.__setattr__(self, "matrix", 0.5 * (m + m.T))


# ------------------------------------------------------------ saturated

def _sat_parts(fit: SaturatedFit):
    nas = fit.counts.n_as.astype(float)
    w = fit.counts.p_hat
    return nas, w, fit.n


def v_ho_saturated(fit: SaturatedFit) -> CovarianceEstimate:
    """Homoskedasticity-only estimator, one pooled residual variance."""
    nas, w, n = _sat_parts(fit)
    s2 = fit.cell_ssr.sum() / n
    w2 = w * w
    k = nas.shape[0] - 1
    m = n * (np.diag((w2 / nas[1:]).sum(axis=1)) + np.full((k, k), (w2 / nas[0]).sum()))
    return CovarianceEstimate(s2 * m, VarianceKind.HO_SAT, {"sigma2": s2})


def v_hc_saturated(fit: SaturatedFit) -> CovarianceEstimate:
    """Heteroskedasticity-consistent (HC0) sandwich for the ATE contrast."""
    nas, w, n = _sat_parts(fit)
    w2 = w * w
    per_cell = w2 * fit.cell_ssr / (nas * nas)
    k = nas.shape[0] - 1
    m = n * (np.diag(per_cell[1:].sum(axis=1)) + np.full((k, k), per_cell[0].sum()))
    return CovarianceEstimate(m, VarianceKind.HC_SAT)


def v_h_hat(fit: SaturatedFit, theta: np.ndarray | None = None) -> np.ndarray:
    """Spread of the stratum-level effects around theta, weighted by n(s)/n."""
    th = fit.theta if theta is None else np.asarray(theta, dtype=float)
    d = fit.beta - th[:, None]
    out = (d * fit.counts.p_hat) @ d.T
    return 0.5 * (out + out.T)       # exactly symmetric, so sums with it stay exact


def v_new_saturated(fit: SaturatedFit) -> CovarianceEstimate:
    vh = v_h_hat(fit)
    hc = v_hc_saturated(fit).matrix
    return CovarianceEstimate(vh + hc, VarianceKind.NEW_SAT, {"v_h": vh, "v_hc": hc})


# ------------------------------------------------------------ strata fixed effects

def v_ho_sfe(fit: SfeFit) -> CovarianceEstimate:
    s2 = fit.cell_ssr.sum() / fit.n
    ginv = np.linalg.inv(fit.gram)
    return CovarianceEstimate(s2 * fit.n * ginv, VarianceKind.HO_SFE, {"sigma2": s2})


def v_hc_sfe(fit: SfeFit) -> CovarianceEstimate:
    """HC0 sandwich for the treatment slopes after partialling out strata."""
    nas = fit.counts.n_as.astype(float)
    k = nas.shape[0] - 1
    p = nas[1:] / fit.counts.n_s                      # (K, S)
    e = np.vstack([np.zeros(k), np.eye(k)])           # e_0 = 0
    d = e[None, :, :] - p.T[:, None, :]               # (S, K+1, K)
    meat = np.einsum("sak,as,sal->kl", d, fit.cell_ssr, d)
    ginv = np.linalg.inv(fit.gram)
    return CovarianceEstimate(fit.n * ginv @ meat @ ginv, VarianceKind.HC_SFE)


def v_a_hat(fit: SaturatedFit, balance: BalanceProfile) -> np.ndarray:
    """Plug-in for the assignment-imbalance component, using pooled shares n_a/n."""
    c = fit.counts
    if balance.tau.size != c.num_strata:
        raise ValueError("balance profile does not match the number of strata")
    pi = c.n_as.sum(axis=1) / c.n
    mu = fit.cell_means @ c.p_hat
    dev = fit.cell_means - mu[:, None]
    xi = dev - pi @ dev
    return _v_a(xi, pi, c.p_hat, balance.tau)


def v_new_sfe(fit: SfeFit, sat_fit: SaturatedFit, balance: BalanceProfile | None = None,
              pi: TargetProportions | None = None) -> CovarianceEstimate:
    """V_H + V_Y estimated from the saturated fit, plus the imbalance term when tau > 0.

    With the default (tau = 0, strong balance) this is the saturated
    heteroskedasticity-consistent estimator plus the stratum-effect spread.
    """
    if sat_fit.n != fit.n or not np.array_equal(sat_fit.counts.n_as, fit.counts.n_as):
        raise ValueError("fits come from different datasets")
    vh = v_h_hat(sat_fit)
    hc = v_hc_saturated(sat_fit).matrix
    meta = {"v_h": vh, "v_hc": hc}
    m = vh + hc
    if balance is not None and np.any(balance.tau > 0):
        va = v_a_hat(sat_fit, balance)
        meta["v_a"] = va
        m = m + va
    pis = fit.counts.pi_hat
    meta["pi_hat_spread"] = float(np.max(np.abs(pis - pis.mean(axis=1, keepdims=True))))
    if pi is not None:
        meta["pi_constant"] = pi.is_constant()
    return CovarianceEstimate(m, VarianceKind.NEW_SFE, meta)


def estimate(kind: VarianceKind | str, sat_fit: SaturatedFit | None, sfe_fit: SfeFit | None,
             balance: BalanceProfile | None = None) -> CovarianceEstimate:
    kind = VarianceKind(kind)
    if kind is VarianceKind.HO_SAT:
        return v_ho_saturated(sat_fit)
    if kind is VarianceKind.HC_SAT:
        return v_hc_saturated(sat_fit)
    if kind is VarianceKind.NEW_SAT:
        return v_new_saturated(sat_fit)
    if kind is VarianceKind.HO_SFE:
        return v_ho_sfe(sfe_fit)
    if kind is VarianceKind.HC_SFE:
        return v_hc_sfe(sfe_fit)
    return v_new_sfe(sfe_fit, sat_fit, balance)


def estimate_all(sat_fit: SaturatedFit, sfe_fit: SfeFit, kinds=tuple(VarianceKind),
                 balance: BalanceProfile | None = None) -> dict:
    """Matrices for several kinds at once, sharing the common pieces."""
    kinds = [VarianceKind(k) for k in kinds]
    out = {}
    need_hc = any(k in (VarianceKind.HC_SAT, VarianceKind.NEW_SAT, VarianceKind.NEW_SFE) for k in kinds)
    hc = v_hc_saturated(sat_fit).matrix if need_hc else None
    vh = v_h_hat(sat_fit) if any(k.flavor == "NEW" for k in kinds) else None
    for k in kinds:
        if k is VarianceKind.HC_SAT:
            out[k] = hc
        elif k is VarianceKind.NEW_SAT:
            out[k] = vh + hc
        elif k is VarianceKind.NEW_SFE:
            m = vh + hc
            if balance is not None and np.any(balance.tau > 0):
                m = m + v_a_hat(sat_fit, balance)
            out[k] = m
        else:
            out[k] = estimate(k, sat_fit, sfe_fit, balance).matrix
    return out


# ------------------------------------------------------------ population

def _pi_matrix(pi, moments) -> np.ndarray:
    if isinstance(pi, TargetProportions):
        p = pi.pi
    else:
        p = np.asarray(pi, dtype=float)
        if p.ndim == 1:
            p = np.repeat(p[:, None], moments.num_strata, axis=1)
    if p.shape != moments.cond_m.shape:
        raise ValueError("target proportions do not match the moments")
    return p


def _pi_constant(pi, moments) -> np.ndarray:
    p = _pi_matrix(pi, moments)
    if np.any(np.abs(p - p[:, :1]) > 1e-12):
        raise ValueError("this formula requires target proportions constant across strata")
    return p[:, 0]


def _tau(balance, moments) -> np.ndarray:
    if isinstance(balance, BalanceProfile):
        tau = balance.tau
    else:
        tau = np.broadcast_to(np.asarray(balance, dtype=float), (moments.num_strata,))
    if tau.size != moments.num_strata:
        raise ValueError("balance profile does not match the number of strata")
    return tau


def v_h_population(moments) -> np.ndarray:
    d = moments.cond_m[1:] - moments.cond_m[0]
    return (d * moments.p_s) @ d.T


def v_y_population(moments, pi) -> np.ndarray:
    p = _pi_matrix(pi, moments)
    r = moments.p_s * moments.cond_var / p
    k = moments.num_treatments
    return np.diag(r[1:].sum(axis=1)) + np.full((k, k), r[0].sum())


def _v_a(xi: np.ndarray, pi: np.ndarray, p_s: np.ndarray, tau: np.ndarray) -> np.ndarray:
    # u_a(s) = xi_a/pi_a e_a - xi_0/pi_0 e_0 ; V_A = sum_s p tau u_a' (diag(pi) - pi pi') u_b
    k = pi.size - 1
    sigma_d = np.diag(pi) - np.outer(pi, pi)
    out = np.zeros((k, k))
    for s in range(p_s.size):
        if tau[s] == 0.0:
            continue
        u = np.zeros((pi.size, k))
        u[1:, :] = np.diag(xi[1:, s] / pi[1:])
        u[0, :] = -xi[0, s] / pi[0]
        out += p_s[s] * tau[s] * (u.T @ sigma_d @ u)
    return out


def _xi(moments, pi: np.ndarray) -> np.ndarray:
    return moments.cond_m - pi @ moments.cond_m


def v_a_population(moments, pi, balance) -> np.ndarray:
    p = _pi_constant(pi, moments)
    return _v_a(_xi(moments, p), p, moments.p_s, _tau(balance, moments))


def v_analytic_sat(moments, pi) -> np.ndarray:
    return v_h_population(moments) + v_y_population(moments, pi)


def v_analytic_sfe(moments, pi, balance) -> np.ndarray:
    return v_h_population(moments) + v_y_population(moments, pi) + v_a_population(moments, pi, balance)


def limit_ho_sat(moments, pi) -> np.ndarray:
    p = _pi_matrix(pi, moments)
    s2 = float((moments.p_s * p * moments.cond_var).sum())
    k = moments.num_treatments
    r = moments.p_s / p
    return s2 * (np.diag(r[1:].sum(axis=1)) + np.full((k, k), r[0].sum()))


def limit_hc_sat(moments, pi) -> np.ndarray:
    return v_y_population(moments, pi)


def limit_ho_sfe(moments, pi) -> np.ndarray:
    p = _pi_constant(pi, moments)
    cm = moments.cond_m
    spread = (p @ cm ** 2) - (p @ cm) ** 2            # varsigma_H^2(s)
    s2 = float((moments.p_s * p[:, None] * moments.cond_var).sum() + moments.p_s @ spread)
    k = moments.num_treatments
    return s2 * (np.diag(1.0 / p[1:]) + np.full((k, k), 1.0 / p[0]))


def limit_hc_sfe(moments, pi) -> np.ndarray:
    p = _pi_constant(pi, moments)
    xi = _xi(moments, p)
    w = ((moments.cond_var + xi ** 2) * moments.p_s).sum(axis=1) / p
    k = moments.num_treatments
    return np.diag(w[1:]) + np.full((k, k), w[0])


# ------------------------------------------------------------ one-treatment scalars

def _binary(moments):
    if moments.num_treatments != 1:
        raise ValueError("scalar summaries need exactly one treatment")


def varsigma_h2(moments) -> float:
    _binary(moments)
    return float(v_h_population(moments)[0, 0])


def varsigma_y2(moments, pi1: float) -> float:
    _binary(moments)
    return float(v_y_population(moments, [1.0 - pi1, pi1])[0, 0])


def varsigma_a2(moments, pi1: float, balance) -> float:
    _binary(moments)
    tau = _tau(balance, moments)
    d = moments.cond_m[1] - moments.cond_m[0]
    return float((1 - 2 * pi1) ** 2 / (pi1 * (1 - pi1)) * np.sum(tau * moments.p_s * d * d))


def hc_sfe_limit_scalar(moments, pi1: float) -> float:
    """[1/(pi(1-pi)) - 3] varsigma_H^2 + varsigma_Y^2."""
    return (1.0 / (pi1 * (1 - pi1)) - 3.0) * varsigma_h2(moments) + varsigma_y2(moments, pi1)
