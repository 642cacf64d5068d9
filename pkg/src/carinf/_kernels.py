"""Hot inner loops.

Every kernel has a pure-numpy implementation (suffix ``_np``).  When numba is
importable the same loops are compiled with ``@njit`` and used by default.
Setting ``CARINF_DISABLE_NUMBA=1`` forces the numpy path; both paths return
identical results.
"""
from __future__ import annotations

import os

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1

_U_GAMMA = np.uint64(GAMMA)
_U_MIX1 = np.uint64(MIX1)
_U_MIX2 = np.uint64(MIX2)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U32 = np.uint64(32)
_ULO = np.uint64(0xFFFFFFFF)
_U1 = np.uint64(1)


def _numba_disabled() -> bool:
    flag = os.environ.get("CARINF_DISABLE_NUMBA", "").strip().lower()
    return flag not in ("", "0", "false", "no")


try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _numba_disabled()
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------- numpy path

def splitmix_block_np(key: np.uint64, start: int, count: int) -> np.ndarray:
    """Outputs ``start .. start+count-1`` of the SplitMix64 sequence seeded with ``key``."""
    ctr = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(key) + ctr * _U_GAMMA
    z = (z ^ (z >> _U30)) * _U_MIX1
    z = (z ^ (z >> _U27)) * _U_MIX2
    return z ^ (z >> _U31)


def mulhi_np(x: np.ndarray, bound: np.ndarray) -> np.ndarray:
    # floor(x * bound / 2**64) for bound < 2**32, using 32-bit halves
    x = np.asarray(x, dtype=np.uint64)
    b = np.asarray(bound, dtype=np.uint64)
    hi = (x >> _U32) * b
    lo = ((x & _ULO) * b) >> _U32
    return (hi + lo) >> _U32


def cell_stats_np(y: np.ndarray, cell: np.ndarray, ncells: int):
    """Counts, means, residuals about the cell mean and within-cell sum of squares."""
    counts = np.bincount(cell, minlength=ncells)
    sums = np.bincount(cell, weights=y, minlength=ncells)
    means = np.full(ncells, np.nan)
    nz = counts > 0
    means[nz] = sums[nz] / counts[nz]
    resid = y - means[cell]
    ss = np.bincount(cell, weights=resid * resid, minlength=ncells)
    return counts, means, resid, ss


def shuffle_blocks_np(order: np.ndarray, starts: np.ndarray, blocks: np.ndarray,
                      keys: np.ndarray) -> np.ndarray:
    """Fisher-Yates shuffle of each stratum's block, written back in unit order.

    ``order`` lists unit indices grouped by stratum, ``starts`` holds the group
    offsets, ``blocks`` the unshuffled labels aligned with ``order`` and
    ``keys`` one SplitMix64 key per group.
    """
    out = np.empty(order.shape[0], dtype=np.int64)
    for g in range(starts.shape[0] - 1):
        lo, hi = int(starts[g]), int(starts[g + 1])
        m = hi - lo
        buf = blocks[lo:hi].copy()
        if m > 1:
            raw = splitmix_block_np(keys[g], 0, m - 1)
            bounds = np.arange(m, 1, -1, dtype=np.uint64)
            js = mulhi_np(raw, bounds)
            for step in range(m - 1):
                i = m - 1 - step
                j = int(js[step])
                buf[i], buf[j] = buf[j], buf[i]
        out[order[lo:hi]] = buf
    return out


def group_sums_np(group: np.ndarray, values: np.ndarray, ngroups: int):
    """Per-group count, sum and sum of squares."""
    counts = np.bincount(group, minlength=ngroups)
    s1 = np.bincount(group, weights=values, minlength=ngroups)
    s2 = np.bincount(group, weights=values * values, minlength=ngroups)
    return counts, s1, s2


# ---------------------------------------------------------------- numba path

def _splitmix_one(key, idx):
    z = key + _U_GAMMA * np.uint64(idx + 1)
    z = (z ^ (z >> _U30)) * _U_MIX1
    z = (z ^ (z >> _U27)) * _U_MIX2
    return z ^ (z >> _U31)


def _splitmix_block_loop(key, start, count):
    out = np.empty(count, dtype=np.uint64)
    for i in range(count):
        out[i] = _splitmix_one(key, start + i)
    return out


def _cell_stats_loop(y, cell, ncells):
    n = y.shape[0]
    counts = np.zeros(ncells, dtype=np.int64)
    sums = np.zeros(ncells)
    for i in range(n):
        counts[cell[i]] += 1
        sums[cell[i]] += y[i]
    means = np.empty(ncells)
    for c in range(ncells):
        means[c] = sums[c] / counts[c] if counts[c] > 0 else np.nan
    resid = np.empty(n)
    ss = np.zeros(ncells)
    for i in range(n):
        r = y[i] - means[cell[i]]
        resid[i] = r
        ss[cell[i]] += r * r
    return counts, means, resid, ss


def _shuffle_blocks_loop(order, starts, blocks, keys):
    out = np.empty(order.shape[0], dtype=np.int64)
    for g in range(starts.shape[0] - 1):
        lo = starts[g]
        m = starts[g + 1] - lo
        buf = blocks[lo:lo + m].copy()
        key = keys[g]
        for step in range(m - 1):
            i = m - 1 - step
            x = _splitmix_one(key, step)
            b = np.uint64(i + 1)
            j = ((x >> _U32) * b + (((x & _ULO) * b) >> _U32)) >> _U32
            jj = np.int64(j)
            tmp = buf[i]
            buf[i] = buf[jj]
            buf[jj] = tmp
        for k in range(m):
            out[order[lo + k]] = buf[k]
    return out


def _group_sums_loop(group, values, ngroups):
    counts = np.zeros(ngroups, dtype=np.int64)
    s1 = np.zeros(ngroups)
    s2 = np.zeros(ngroups)
    for i in range(group.shape[0]):
        g = group[i]
        v = values[i]
        counts[g] += 1
        s1[g] += v
        s2[g] += v * v
    return counts, s1, s2


if HAVE_NUMBA:
    # the loops resolve _splitmix_one at compile time, so rebind it first
    _splitmix_one = numba.njit(cache=True)(_splitmix_one)
    splitmix_block_nb = numba.njit(cache=True)(_splitmix_block_loop)
    cell_stats_nb = numba.njit(cache=True)(_cell_stats_loop)
    shuffle_blocks_nb = numba.njit(cache=True)(_shuffle_blocks_loop)
    group_sums_nb = numba.njit(cache=True)(_group_sums_loop)
else:  # pragma: no cover
    splitmix_block_nb = cell_stats_nb = shuffle_blocks_nb = group_sums_nb = None


def splitmix_block(key, start: int, count: int) -> np.ndarray:
    if USE_NUMBA:
        return splitmix_block_nb(np.uint64(key), np.int64(start), np.int64(count))
    return splitmix_block_np(np.uint64(key), start, count)


def cell_stats(y: np.ndarray, cell: np.ndarray, ncells: int):
    if USE_NUMBA:
        return cell_stats_nb(y, cell, ncells)
    return cell_stats_np(y, cell, ncells)


def shuffle_blocks(order, starts, blocks, keys) -> np.ndarray:
    if USE_NUMBA:
        return shuffle_blocks_nb(order, starts, blocks, keys)
    return shuffle_blocks_np(order, starts, blocks, keys)


def group_sums(group, values, ngroups: int):
    if USE_NUMBA:
        return group_sums_nb(group, values, ngroups)
    return group_sums_np(group, values, ngroups)
