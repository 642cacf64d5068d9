"""Dense-matrix reference implementations used as test oracles."""
import numpy as np


def saturated_design(d):
    K1, S = d.num_treatments + 1, d.num_strata
    x = np.zeros((d.n, K1 * S))
    x[np.arange(d.n), d.a * S + (d.s - 1)] = 1.0
    return x


def sfe_design(d):
    S, K = d.num_strata, d.num_treatments
    x = np.zeros((d.n, S + K))
    x[np.arange(d.n), d.s - 1] = 1.0
    for k in range(1, K + 1):
        x[:, S + k - 1] = (d.a == k)
    return x


def sandwich(x, e, hc=True):
    n = x.shape[0]
    xtx_inv = np.linalg.inv(x.T @ x)
    if hc:
        meat = (x * (e * e)[:, None]).T @ x
        return n * xtx_inv @ meat @ xtx_inv
    return (e @ e / n) * n * xtx_inv


def saturated_oracle(d):
    """theta, HO and HC variance matrices from a dense saturated regression."""
    x = saturated_design(d)
    b, *_ = np.linalg.lstsq(x, d.y, rcond=None)
    e = d.y - x @ b
    K1, S = d.num_treatments + 1, d.num_strata
    p = np.bincount(d.s - 1, minlength=S) / d.n
    # theta_k = sum_s p(s) (b[k, s] - b[0, s])
    r = np.zeros((K1 - 1, K1 * S))
    for k in range(1, K1):
        r[k - 1, k * S:(k + 1) * S] = p
        r[k - 1, :S] -= p
    beta = b.reshape(K1, S)[1:] - b.reshape(K1, S)[0]
    return r @ b, r @ sandwich(x, e, False) @ r.T, r @ sandwich(x, e, True) @ r.T, beta, p


def sfe_oracle(d):
    x = sfe_design(d)
    b, *_ = np.linalg.lstsq(x, d.y, rcond=None)
    e = d.y - x @ b
    S = d.num_strata
    ho = sandwich(x, e, False)[S:, S:]
    hc = sandwich(x, e, True)[S:, S:]
    return b[S:], ho, hc, b[:S]
