"""Treatment assignment mechanisms: simple random sampling and stratified block randomization."""
from __future__ import annotations

import numpy as np

from . import _kernels as K
from .core import BalanceProfile, Scheme, TargetProportions
from .rng import RngSeed, derive_key

TAG_SRS = 0x5352
TAG_SBR = 0x534252

# guard so that n(s) * pi values that are integers up to rounding are not floored down
FLOOR_GUARD = 1e-9


def _check_strata(strata: np.ndarray, pi: TargetProportions) -> np.ndarray:
    s = np.asarray(strata, dtype=np.int64).ravel()
    if s.size and (s.min() < 1 or s.max() > pi.num_strata):
        raise ValueError(f"stratum labels must lie in 1..{pi.num_strata}")
    return s


def assign_srs(strata: np.ndarray, pi: TargetProportions, seed: RngSeed) -> np.ndarray:
    """Independent categorical draws with P(A_i = a | S_i = s) = pi[a, s]."""
    s = _check_strata(strata, pi)
    u = seed.spawn(TAG_SRS).rng().uniform(s.size)
    cum = np.cumsum(pi.pi, axis=0)[:-1]          # thresholds for labels 1..K
    return (u[None, :] >= cum[:, s - 1]).sum(axis=0).astype(np.int64)


def sbr_block_counts(n_s: np.ndarray, pi: TargetProportions) -> np.ndarray:
    """Treated counts floor(n(s) pi_a(s)) for a >= 1; control takes the remainder."""
    n_s = np.asarray(n_s, dtype=np.int64)
    treated = np.floor(n_s[None, :] * pi.pi[1:] + FLOOR_GUARD).astype(np.int64)
    over = treated.sum(axis=0) > n_s
    if np.any(over):  # only reachable through the guard on pathological inputs
        raise ValueError("block sizes exceed stratum size")
    return np.vstack([n_s - treated.sum(axis=0), treated])


def assign_sbr(strata: np.ndarray, pi: TargetProportions, seed: RngSeed) -> np.ndarray:
    """Stratified block randomization.

    Within stratum s the vector of labels with floor(n(s) pi_a(s)) copies of each
    treatment (remainder to control) is shuffled uniformly and handed out to the
    stratum's units in their order of appearance.
    """
    s = _check_strata(strata, pi)
    S = pi.num_strata
    n_s = np.bincount(s - 1, minlength=S)
    counts = sbr_block_counts(n_s, pi)
    order = np.argsort(s, kind="stable")
    starts = np.concatenate(([0], np.cumsum(n_s))).astype(np.int64)
    # per stratum: treatments 1..K in order, then control
    rows = np.r_[np.arange(1, counts.shape[0]), 0]
    labels = np.repeat(np.tile(rows, S), counts[rows].T.ravel()).astype(np.int64)
    keys = np.array([derive_key(seed.seed, seed.stream, TAG_SBR, g + 1) for g in range(S)],
                    dtype=np.uint64)
    return K.shuffle_blocks(order.astype(np.int64), starts, labels, keys)


def assign(scheme: Scheme | str, strata: np.ndarray, pi: TargetProportions,
           seed: RngSeed) -> np.ndarray:
    if Scheme(scheme) is Scheme.SRS:
        return assign_srs(strata, pi, seed)
    return assign_sbr(strata, pi, seed)


def balance_profile(scheme: Scheme | str, num_strata: int) -> BalanceProfile:
    """tau(s) = 1 under simple random sampling, 0 under stratified blocks."""
    return BalanceProfile.for_scheme(scheme, num_strata)
