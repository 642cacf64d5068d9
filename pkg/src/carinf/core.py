"""Shared data types: datasets, cell counts, target proportions, hypotheses."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np


class CarError(Exception):
    """Base class for estimation errors raised by this package."""


class EmptyCellError(CarError, ValueError):
    pass


class SingularDesignError(CarError):
    pass


class SingularStudentizerError(CarError):
    pass


class GridMismatchError(CarError, ValueError):
    pass


class EstimatorKind(str, Enum):
    SAT = "SAT"
    SFE = "SFE"


class VarianceKind(str, Enum):
    HO_SAT = "HO_SAT"
    HC_SAT = "HC_SAT"
    NEW_SAT = "NEW_SAT"
    HO_SFE = "HO_SFE"
    HC_SFE = "HC_SFE"
    NEW_SFE = "NEW_SFE"

    @property
    def estimator(self) -> EstimatorKind:
        return EstimatorKind(self.value.split("_")[1])

    @property
    def flavor(self) -> str:
        return self.value.split("_")[0]


class Scheme(str, Enum):
    SRS = "SRS"
    SBR = "SBR"


class Observation(NamedTuple):
    y: float
    a: int
    s: int


def _frozen(x: np.ndarray) -> np.ndarray:
    x.setflags(write=False)
    return x


@dataclass(frozen=True)
class Dataset:
    """Outcomes ``y``, treatment labels ``a`` in 0..K (0 is control) and strata ``s`` in 1..S."""

    y: np.ndarray
    a: np.ndarray
    s: np.ndarray
    num_treatments: int
    num_strata: int

    def __post_init__(self):
        y = np.array(self.y, dtype=np.float64).ravel()
        a = np.array(self.a).ravel()
        s = np.array(self.s).ravel()
        if not (y.shape == a.shape == s.shape):
            raise ValueError("y, a and s must have equal length")
        if y.size == 0:
            raise ValueError("dataset must contain at least one observation")
        if self.num_treatments < 1 or self.num_strata < 1:
            raise ValueError("need at least one treatment and one stratum")
        for name, arr in (("a", a), ("s", s)):
            if arr.dtype.kind == "f":
                if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                    raise ValueError(f"labels in {name} must be integers")
            elif arr.dtype.kind not in "iu":
                raise ValueError(f"labels in {name} must be integers")
        a = a.astype(np.int64)
        s = s.astype(np.int64)
        if a.min() < 0 or a.max() > self.num_treatments:
            raise ValueError(f"treatment labels must lie in 0..{self.num_treatments}")
        if s.min() < 1 or s.max() > self.num_strata:
            raise ValueError(f"stratum labels must lie in 1..{self.num_strata}")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "a", _frozen(a))
        object.__setattr__(self, "s", _frozen(s))
        object.__setattr__(self, "num_treatments", int(self.num_treatments))
        object.__setattr__(self, "num_strata", int(self.num_strata))

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def cell_index(self) -> np.ndarray:
        """Flat cell id ``a * S + (s - 1)``, matching arrays of shape (K+1, S)."""
        return self.a * self.num_strata + (self.s - 1)

    def observations(self) -> Iterator[Observation]:
        for y, a, s in zip(self.y, self.a, self.s):
            yield Observation(float(y), int(a), int(s))

    @classmethod
    def from_observations(cls, obs: Iterable[Observation | tuple], num_treatments: int,
                          num_strata: int) -> "Dataset":
        rows = list(obs)
        if not rows:
            raise ValueError("dataset must contain at least one observation")
        y, a, s = zip(*rows)
        return cls(np.asarray(y, dtype=float), np.asarray(a), np.asarray(s),
                   num_treatments, num_strata)

    def with_outcomes(self, y: np.ndarray) -> "Dataset":
        return Dataset(y, self.a, self.s, self.num_treatments, self.num_strata)


@dataclass(frozen=True)
class StratumCounts:
    """Cell counts ``n_as[a, s-1]`` with stratum and overall totals."""

    n_as: np.ndarray
    n_s: np.ndarray = field(init=False)
    n: int = field(init=False)

    def __post_init__(self):
        n_as = np.asarray(self.n_as, dtype=np.int64)
        if n_as.ndim != 2 or n_as.shape[0] < 2:
            raise ValueError("n_as must have shape (K+1, S) with K >= 1")
        if np.any(n_as < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "n_as", _frozen(n_as))
        object.__setattr__(self, "n_s", _frozen(n_as.sum(axis=0)))
        object.__setattr__(self, "n", int(n_as.sum()))

    @property
    def num_treatments(self) -> int:
        return self.n_as.shape[0] - 1

    @property
    def num_strata(self) -> int:
        return self.n_as.shape[1]

    @property
    def p_hat(self) -> np.ndarray:
        """Stratum shares n(s)/n."""
        return self.n_s / self.n

    @property
    def pi_hat(self) -> np.ndarray:
        """Within-stratum assignment shares n_a(s)/n(s), shape (K+1, S)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.n_as / self.n_s

    def empty_cells(self) -> list[tuple[int, int]]:
        a, s = np.nonzero(self.n_as == 0)
        return [(int(i), int(j) + 1) for i, j in zip(a, s)]


def count_cells(dataset: Dataset) -> StratumCounts:
    ncell = (dataset.num_treatments + 1) * dataset.num_strata
    counts = np.bincount(dataset.cell_index, minlength=ncell)
    return StratumCounts(counts.reshape(dataset.num_treatments + 1, dataset.num_strata))


def validate_dataset(dataset: Dataset) -> list[str]:
    """Diagnostics that block estimation; an empty list means the data are usable."""
    problems = []
    bad = np.flatnonzero(~np.isfinite(dataset.y))
    problems.extend(f"non-finite outcome at record {int(i)}" for i in bad)
    for a, s in count_cells(dataset).empty_cells():
        problems.append(f"empty cell (a={a}, s={s})")
    return problems


def require_estimable(dataset: Dataset) -> StratumCounts:
    """Count cells, raising if outcomes are non-finite or any cell is empty."""
    if not np.all(np.isfinite(dataset.y)):
        i = int(np.flatnonzero(~np.isfinite(dataset.y))[0])
        raise ValueError(f"non-finite outcome at record {i}")
    counts = count_cells(dataset)
    empty = counts.empty_cells()
    if empty:
        cells = ", ".join(f"(a={a}, s={s})" for a, s in empty)
        raise EmptyCellError(f"empty cell(s): {cells}")
    return counts


# interior margin keeping targets away from 0 and 1
PI_MARGIN = 1e-9


@dataclass(frozen=True)
class TargetProportions:
    """Target assignment probabilities ``pi[a, s-1]``; each column sums to one."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi, dtype=np.float64)
        if pi.ndim != 2 or pi.shape[0] < 2 or pi.shape[1] < 1:
            raise ValueError("pi must have shape (K+1, S) with K >= 1")
        if not np.all(np.isfinite(pi)):
            raise ValueError("pi must be finite")
        if np.any(pi <= PI_MARGIN) or np.any(pi >= 1.0 - PI_MARGIN):
            raise ValueError("every target proportion must lie strictly inside (0, 1)")
        if np.any(np.abs(pi.sum(axis=0) - 1.0) > 1e-12):
            raise ValueError("target proportions must sum to one within each stratum")
        object.__setattr__(self, "pi", _frozen(pi))

    @classmethod
    def constant(cls, props: Sequence[float], num_strata: int) -> "TargetProportions":
        col = np.asarray(props, dtype=float).reshape(-1, 1)
        return cls(np.repeat(col, num_strata, axis=1))

    @classmethod
    def binary(cls, pi1: float | Sequence[float], num_strata: int) -> "TargetProportions":
        """Single treatment with P(A=1 | S=s) = pi1 (scalar or one value per stratum)."""
        p1 = np.broadcast_to(np.asarray(pi1, dtype=float), (num_strata,))
        return cls(np.vstack([1.0 - p1, p1]))

    @property
    def num_treatments(self) -> int:
        return self.pi.shape[0] - 1

    @property
    def num_strata(self) -> int:
        return self.pi.shape[1]

    def is_constant(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.pi - self.pi[:, :1]) <= tol))


@dataclass(frozen=True)
class BalanceProfile:
    """Per-stratum tau(s) in [0, 1]: 1 for simple random sampling, 0 for strong balance."""

    tau: np.ndarray

    def __post_init__(self):
        tau = np.array(self.tau, dtype=np.float64).ravel()
        if tau.size == 0 or np.any(tau < 0) or np.any(tau > 1) or not np.all(np.isfinite(tau)):
            raise ValueError("tau must lie in [0, 1]")
        object.__setattr__(self, "tau", _frozen(tau))

    @classmethod
    def uniform(cls, tau: float, num_strata: int) -> "BalanceProfile":
        return cls(np.full(num_strata, float(tau)))

    @classmethod
    def for_scheme(cls, scheme: Scheme | str, num_strata: int) -> "BalanceProfile":
        return cls.uniform(1.0 if Scheme(scheme) is Scheme.SRS else 0.0, num_strata)


@dataclass(frozen=True)
class LinearHypothesis:
    """H0: Psi theta = c, tested at level alpha."""

    psi: np.ndarray
    c: np.ndarray
    alpha: float = 0.05

    def __post_init__(self):
        psi = np.atleast_2d(np.array(self.psi, dtype=np.float64))
        c = np.array(self.c, dtype=np.float64).ravel()
        if psi.shape[0] != c.shape[0]:
            raise ValueError("psi must have one row per entry of c")
        if psi.shape[0] > psi.shape[1]:
            raise ValueError("psi has more rows than columns")
        if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(c))):
            raise ValueError("psi and c must be finite")
        sv = np.linalg.svd(psi, compute_uv=False)
        if sv[0] == 0.0 or np.sum(sv > 1e-10 * sv[0]) < psi.shape[0]:
            raise ValueError("psi must have full row rank")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        object.__setattr__(self, "psi", _frozen(psi))
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def rank(self) -> int:
        return self.psi.shape[0]

    @classmethod
    def identity(cls, num_treatments: int, alpha: float = 0.05) -> "LinearHypothesis":
        return cls(np.eye(num_treatments), np.zeros(num_treatments), alpha)

    @classmethod
    def single(cls, index: int, num_treatments: int, c: float = 0.0,
               alpha: float = 0.05) -> "LinearHypothesis":
        """H0: theta_index = c, with ``index`` 1-based over the treatments."""
        psi = np.zeros((1, num_treatments))
        psi[0, index - 1] = 1.0
        return cls(psi, [c], alpha)


@dataclass(frozen=True)
class AteEstimate:
    theta: np.ndarray
    kind: EstimatorKind
    n: int

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen(np.array(self.theta, dtype=float).ravel()))
