"""Simulation designs (Models 1-4) and their population moments.

All designs have one treatment.  The covariate Z is a standardized Beta(2, 2)
variable on [-sqrt(5), sqrt(5)] in Models 1-3 and Uniform(-2, 2) in Model 4.
Strata are equal-length intervals of the support of Z, and potential outcomes
are

    Y(a) = mu_a + m_a(Z) - M_a + sigma_a(Z) eps_a,    M_a = E[m_a(Z)],

so that E[Y(a)] = mu_a.  The constants M_a are computed once by Monte Carlo.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import _kernels as K
from .core import Dataset, Scheme, TargetProportions
from .randomizers import assign
from .rng import RngSeed

TAG_Z = 0x5A
TAG_EPS = 0x45
TAG_ASSIGN = 0x41
TAG_MOMENTS = 0x4D4F4D

ORACLE_SEED = RngSeed(20_190_611, 0)
ORACLE_BUDGET = 10_000_000
MOMENTS_FORMAT = "carinf-population-moments"
MOMENTS_VERSION = 1

SQRT5 = math.sqrt(5.0)


def support(model_id: int) -> tuple[float, float]:
    if model_id in (1, 2, 3):
        return (-SQRT5, SQRT5)
    if model_id == 4:
        return (-2.0, 2.0)
    raise ValueError(f"unknown model {model_id}")


def noise_variance(model_id: int) -> float:
    """Var(eps): 1 for standard normal errors, 1/3 for t_3 / 3."""
    return 1.0 / 3.0 if model_id == 4 else 1.0


@dataclass(frozen=True)
class ModelSpec:
    model_id: int
    gamma: float = 1.0
    sigma0: float = 1.0
    sigma1: float = 1.0
    mu0: float = 0.0
    mu1: float = 0.0
    num_strata: int = 10
    pi: TargetProportions = field(default_factory=lambda: TargetProportions.binary(0.5, 10))
    n: int = 500
    big_m: tuple[float, float] | None = None

    def __post_init__(self):
        if self.model_id not in (1, 2, 3, 4):
            raise ValueError("model_id must be 1, 2, 3 or 4")
        if not (math.isfinite(self.gamma) and math.isfinite(self.mu0) and math.isfinite(self.mu1)):
            raise ValueError("gamma and mu must be finite")
        if not (self.sigma0 > 0 and self.sigma1 > 0):
            raise ValueError("sigma0 and sigma1 must be positive")
        if self.num_strata < 1 or self.n < 1:
            raise ValueError("num_strata and n must be positive")
        if self.pi.num_treatments != 1 or self.pi.num_strata != self.num_strata:
            raise ValueError("pi must describe one treatment over num_strata strata")
        if self.big_m is not None:
            object.__setattr__(self, "big_m", tuple(float(v) for v in self.big_m))

    @property
    def support(self) -> tuple[float, float]:
        return support(self.model_id)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([self.sigma0, self.sigma1])


def conditional_means(model_id: int, gamma: float, z: np.ndarray) -> np.ndarray:
    """Uncentered m_0(z), m_1(z) stacked into shape (2, len(z))."""
    z = np.asarray(z, dtype=float)
    if model_id == 1:
        m0 = gamma * z
        m1 = m0
    elif model_id in (2, 3):
        m0 = np.where(z <= 0.5, -gamma * np.log(z + 3.0), 0.0)
        m1 = gamma * z
    elif model_id == 4:
        inside = np.abs(z) <= 1.0     # boundary points take the first branch
        m0 = np.where(inside, gamma * z * z, gamma * z)
        m1 = np.where(inside, gamma * z, gamma * z * z)
    else:
        raise ValueError(f"unknown model {model_id}")
    return np.vstack([m0, m1])


def scale_shape(model_id: int, z: np.ndarray) -> np.ndarray:
    """g(z) with sigma_a(z) = sigma_a g(z)."""
    z = np.asarray(z, dtype=float)
    return np.abs(z) if model_id in (3, 4) else np.ones_like(z)


def _draw_z(model_id: int, n: int, seed: RngSeed) -> np.ndarray:
    rng = seed.rng()
    if model_id == 4:
        return 4.0 * rng.uniform(n) - 2.0
    u = rng.uniform(3 * n).reshape(3, n)
    # median of three uniforms is Beta(2, 2)
    b = np.maximum(np.minimum(u[0], u[1]), np.minimum(np.maximum(u[0], u[1]), u[2]))
    return (b - 0.5) * math.sqrt(20.0)


def draw_covariates(spec: ModelSpec, n: int, seed: RngSeed) -> np.ndarray:
    return _draw_z(spec.model_id, n, seed.spawn(TAG_Z))


def stratify(z: np.ndarray, num_strata: int, bounds: tuple[float, float]) -> np.ndarray:
    """Equal-length interval strata 1..S; the upper endpoint joins the last stratum."""
    lo, hi = bounds
    z = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(z)) or np.any(z < lo - 1e-9) or np.any(z > hi + 1e-9):
        raise ValueError("covariate outside the support")
    edges = np.linspace(lo, hi, num_strata + 1)[1:-1]
    return np.searchsorted(edges, z, side="right").astype(np.int64) + 1


def _noise(model_id: int, n: int, seed: RngSeed) -> np.ndarray:
    rng = seed.rng()
    if model_id == 4:
        return rng.student_t3(n) / 3.0
    return rng.normal(n)


def potential_outcomes(spec: ModelSpec, z: np.ndarray, seed: RngSeed) -> np.ndarray:
    """Potential outcomes (Y(0), Y(1)) of shape (2, len(z))."""
    if spec.big_m is None:
        if spec.model_id != 1:
            raise ValueError("centering constants missing; build the ModelSpec with with_centering()")
        big_m = (0.0, 0.0)
    else:
        big_m = spec.big_m
    z = np.asarray(z, dtype=float)
    m = conditional_means(spec.model_id, spec.gamma, z)
    g = scale_shape(spec.model_id, z)
    mus = (spec.mu0, spec.mu1)
    out = np.empty((2, z.size))
    for a in range(2):
        eps = _noise(spec.model_id, z.size, seed.spawn(TAG_EPS, a))
        out[a] = mus[a] + (m[a] - big_m[a]) + spec.sigmas[a] * g * eps
    return out


def simulate_dataset(spec: ModelSpec, scheme: Scheme | str, seed: RngSeed) -> Dataset:
    z = draw_covariates(spec, spec.n, seed)
    s = stratify(z, spec.num_strata, spec.support)
    y = potential_outcomes(spec, z, seed)
    a = assign(scheme, s, spec.pi, seed.spawn(TAG_ASSIGN))
    return Dataset(np.where(a == 1, y[1], y[0]), a, s, 1, spec.num_strata)


@dataclass(frozen=True)
class PopulationMoments:
    """Population quantities by stratum, with Monte Carlo standard errors.

    ``cond_m[a, s-1]`` is E[m_a(Z) | S = s] for the centered m_a, ``cond_var``
    the variance of Y(a) - E[Y(a) | S] within stratum s.
    """

    p_s: np.ndarray
    cond_m: np.ndarray
    cond_var: np.ndarray
    big_m: np.ndarray
    se_p_s: np.ndarray | None = None
    se_cond_m: np.ndarray | None = None
    se_cond_var: np.ndarray | None = None
    se_big_m: np.ndarray | None = None
    budget: int = 0
    seed: tuple[int, int] = (0, 0)
    label: str = ""

    def __post_init__(self):
        p = np.asarray(self.p_s, dtype=float)
        cm = np.atleast_2d(np.asarray(self.cond_m, dtype=float))
        cv = np.atleast_2d(np.asarray(self.cond_var, dtype=float))
        if cm.shape != cv.shape or cm.shape[1] != p.size or cm.shape[0] < 2:
            raise ValueError("moment arrays must have shape (K+1, S) matching p_s")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("p_s must be a probability vector")
        if np.any(cv < 0):
            raise ValueError("conditional variances must be non-negative")
        object.__setattr__(self, "p_s", p)
        object.__setattr__(self, "cond_m", cm)
        object.__setattr__(self, "cond_var", cv)
        object.__setattr__(self, "big_m", np.asarray(self.big_m, dtype=float))

    @property
    def num_treatments(self) -> int:
        return self.cond_m.shape[0] - 1

    @property
    def num_strata(self) -> int:
        return self.p_s.size

    def to_json(self) -> str:
        def arr(x):
            return None if x is None else np.asarray(x).tolist()
        doc = {
            "format": MOMENTS_FORMAT, "version": MOMENTS_VERSION, "label": self.label,
            "budget": self.budget, "seed": list(self.seed),
            "p_s": arr(self.p_s), "cond_m": arr(self.cond_m), "cond_var": arr(self.cond_var),
            "big_m": arr(self.big_m), "se_p_s": arr(self.se_p_s), "se_cond_m": arr(self.se_cond_m),
            "se_cond_var": arr(self.se_cond_var), "se_big_m": arr(self.se_big_m),
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "PopulationMoments":
        doc = json.loads(text)
        if doc.get("format") != MOMENTS_FORMAT or doc.get("version") != MOMENTS_VERSION:
            raise ValueError("not a version-1 population moments file")

        def arr(key):
            v = doc.get(key)
            return None if v is None else np.asarray(v, dtype=float)
        return cls(arr("p_s"), arr("cond_m"), arr("cond_var"), arr("big_m"),
                   arr("se_p_s"), arr("se_cond_m"), arr("se_cond_var"), arr("se_big_m"),
                   int(doc["budget"]), tuple(doc["seed"]), doc.get("label", ""))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "PopulationMoments":
        return cls.from_json(Path(path).read_text())


_BATCHES = 20


@lru_cache(maxsize=64)
def _moments_cached(model_id: int, gamma: float, sigma0: float, sigma1: float,
                    num_strata: int, budget: int, seed: RngSeed) -> PopulationMoments:
    S = num_strata
    bounds = support(model_id)
    sig2 = np.array([sigma0, sigma1]) ** 2
    var_eps = noise_variance(model_id)
    nb = min(_BATCHES, budget)
    sizes = np.full(nb, budget // nb)
    sizes[: budget % nb] += 1
    # per batch sums: counts, sum m_a, sum m_a^2, sum g^2 by stratum
    cnt = np.zeros((nb, S))
    s1 = np.zeros((nb, 2, S))
    s2 = np.zeros((nb, 2, S))
    g2 = np.zeros((nb, S))
    for b in range(nb):
        z = _draw_z(model_id, int(sizes[b]), seed.spawn(TAG_MOMENTS, b))
        st = stratify(z, S, bounds) - 1
        m = conditional_means(model_id, gamma, z)
        for a in range(2):
            c, t1, t2 = K.group_sums(st, np.ascontiguousarray(m[a]), S)
            s1[b, a], s2[b, a] = t1, t2
        cnt[b] = c
        g2[b] = np.bincount(st, weights=scale_shape(model_id, z) ** 2, minlength=S)

    def estimates(cnt, s1, s2, g2):
        n = cnt.sum()
        p = cnt / n
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = s1 / cnt
            var_m = np.maximum(s2 / cnt - mean ** 2, 0.0)
            eg2 = g2 / cnt
        big_m = s1.sum(axis=1) / n
        cond_m = mean - big_m[:, None]
        cond_var = var_m + sig2[:, None] * eg2[None, :] * var_eps
        return p, cond_m, cond_var, big_m

    p, cond_m, cond_var, big_m = estimates(cnt.sum(0), s1.sum(0), s2.sum(0), g2.sum(0))
    if nb >= 2:
        reps = [estimates(cnt[b], s1[b], s2[b], g2[b]) for b in range(nb)]
        se = [np.std(np.stack([r[k] for r in reps]), axis=0, ddof=1) / math.sqrt(nb)
              for k in range(4)]
    else:
        se = [None] * 4
    label = f"model={model_id} gamma={gamma!r} sigma=({sigma0!r},{sigma1!r}) strata={S}"
    return PopulationMoments(p, cond_m, cond_var, big_m, se[0], se[1], se[2], se[3],
                             budget, (seed.seed, seed.stream), label)


def population_moments(spec: ModelSpec, budget: int = ORACLE_BUDGET,
                       seed: RngSeed = ORACLE_SEED) -> PopulationMoments:
    """Monte Carlo over Z of p(s), E[m_a | s], within-stratum variances and M_a.

    The noise enters only through sigma_a^2 E[g(Z)^2 | s] Var(eps), which is
    exact, so the draws are spent on Z alone.  Results are cached per process.
    """
    if budget < 1:
        raise ValueError("budget must be positive")
    return _moments_cached(spec.model_id, float(spec.gamma), float(spec.sigma0),
                           float(spec.sigma1), int(spec.num_strata), int(budget), seed)


def with_centering(spec: ModelSpec, budget: int = ORACLE_BUDGET,
                   seed: RngSeed = ORACLE_SEED) -> ModelSpec:
    """Copy of ``spec`` with M_a filled in (exactly zero for Model 1)."""
    if spec.model_id == 1:
        return replace(spec, big_m=(0.0, 0.0))
    mom = population_moments(spec, budget, seed)
    return replace(spec, big_m=(float(mom.big_m[0]), float(mom.big_m[1])))
