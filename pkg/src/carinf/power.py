"""Local power of Wald tests against sqrt(n)-local alternatives Psi theta = c + lambda / sqrt(n)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hypothesis import critical_value
from .rng import RngSeed
from .special import noncentral_chi2_sf

__all__ = ["LocalPowerProblem", "PowerResult", "local_power", "psd_sqrt", "noncentral_chi2_sf"]


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root of a positive semi-definite matrix."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    scale = max(1.0, float(np.max(np.abs(m))))
    if m.shape[0] != m.shape[1] or np.max(np.abs(m - m.T)) > 1e-10 * scale:
        raise ValueError("matrix must be square and symmetric")
    w, q = np.linalg.eigh(0.5 * (m + m.T))
    if w.min() < -1e-10 * max(1.0, abs(w.max())):
        raise ValueError("matrix is not positive semi-definite")
    return (q * np.sqrt(np.clip(w, 0.0, None))) @ q.T


@dataclass(frozen=True)
class LocalPowerProblem:
    """True variance ``v``, studentizer limit ``v_stud``, restriction ``psi`` and drift ``lam``."""

    v: np.ndarray
    v_stud: np.ndarray
    psi: np.ndarray
    lam: np.ndarray
    alpha: float = 0.05

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.v, dtype=float))
        vs = np.atleast_2d(np.asarray(self.v_stud, dtype=float))
        psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        lam = np.asarray(self.lam, dtype=float).ravel()
        k = v.shape[0]
        if v.shape != (k, k) or vs.shape != (k, k) or psi.shape[1] != k or psi.shape[0] != lam.size:
            raise ValueError("inconsistent dimensions")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        for name, m in (("v", v), ("v_stud", vs)):
            mid = psi @ m @ psi.T
            if np.linalg.eigvalsh(0.5 * (mid + mid.T)).min() <= 0:
                raise ValueError(f"Psi {name} Psi' must be positive definite")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "v_stud", vs)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "lam", lam)

    @property
    def rank(self) -> int:
        return self.psi.shape[0]

    def noncentrality(self) -> float:
        mid = self.psi @ self.v @ self.psi.T
        return float(self.lam @ np.linalg.solve(mid, self.lam))


@dataclass(frozen=True)
class PowerResult:
    power: float
    std_error: float
    method: str
    reps: int = 0


def local_power(problem: LocalPowerProblem, method: str = "closed_form", mc_reps: int = 1_000_000,
                seed: RngSeed = RngSeed(0), max_se: float | None = None) -> PowerResult:
    """Limit rejection probability of the Wald test.

    ``closed_form`` requires the studentizer to be consistent (v_stud == v) and
    returns a noncentral chi-square tail.  ``monte_carlo`` simulates the
    limiting quadratic form; ``max_se`` raises the number of draws until the
    worst-case binomial standard error is at most that value.
    """
    crit = critical_value(problem.rank, problem.alpha)
    if method == "closed_form":
        v = problem.v
        gap = np.linalg.norm(v - problem.v_stud) / max(np.linalg.norm(v), 1e-300)
        if gap > 1e-10:
            raise ValueError("closed form needs a consistent studentizer (v_stud == v)")
        mu = problem.noncentrality()
        if mu == 0.0:
            # by definition of the critical value
            return PowerResult(problem.alpha, 0.0, method)
        return PowerResult(noncentral_chi2_sf(crit, problem.rank, mu), 0.0, method)
    if method != "monte_carlo":
        raise ValueError("method must be 'closed_form' or 'monte_carlo'")
    reps = int(mc_reps)
    if max_se is not None:
        reps = max(reps, int(np.ceil(0.25 / max_se ** 2)))
    mid = problem.psi @ problem.v @ problem.psi.T
    mid_s = problem.psi @ problem.v_stud @ problem.psi.T
    root = psd_sqrt(mid)
    kmat = root @ np.linalg.solve(mid_s, root)
    shift = np.linalg.solve(root, problem.lam)
    r = problem.rank
    rng = seed.rng()
    hits = 0
    chunk = 200_000
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        x = rng.normal(m * r).reshape(m, r) + shift
        q = np.einsum("ij,jk,ik->i", x, kmat, x)
        hits += int(np.count_nonzero(q > crit))
        done += m
    p = hits / reps
    return PowerResult(p, float(np.sqrt(p * (1 - p) / reps)), method, reps)
