"""Monte Carlo rejection-rate studies and comparison with stored reference tables."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (EstimatorKind, GridMismatchError, LinearHypothesis, Scheme, TargetProportions,
                   VarianceKind, count_cells)
from .dgp import ModelSpec, simulate_dataset, with_centering
from .estimators import fit_saturated, fit_sfe
from .hypothesis import critical_value, wald_statistic
from .randomizers import balance_profile
from .rng import RngSeed, derive_key
from .variance import estimate_all

TAG_RETRY = 0x5245
MAX_RETRIES = 100
CHUNK = 250
SIDES = ("H0", "H1")
ALL_KINDS = tuple(VarianceKind)
TABLE5_PI1 = (0.20, 0.25, 0.30, 0.35, 0.40, 0.60, 0.65, 0.70, 0.75, 0.80)

TABLES = {
    "t1": {"pi1": 0.3, "gamma": 1.0, "sigma1": 1.0},
    "t2": {"pi1": 0.3, "gamma": 2.0, "sigma1": math.sqrt(2.0)},
    "t3": {"pi1": 0.7, "gamma": 1.0, "sigma1": 1.0},
    "t4": {"pi1": 0.7, "gamma": 2.0, "sigma1": math.sqrt(2.0)},
    "t5": {"pi1": TABLE5_PI1, "gamma": 1.0, "sigma1": 1.0},
}
NUM_STRATA = 10
SAMPLE_SIZE = 500
H1_EFFECT = 0.2


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("CARINF_THREADS", "1")))
    except ValueError:
        return 1


def table_spec(table_id: str, model_id: int, n: int = SAMPLE_SIZE) -> ModelSpec:
    """H0 design for one model row of a reference table."""
    if table_id not in TABLES:
        raise ValueError(f"unknown table {table_id!r}; expected one of {sorted(TABLES)}")
    p = TABLES[table_id]
    return ModelSpec(model_id, gamma=p["gamma"], sigma1=p["sigma1"], num_strata=NUM_STRATA,
                     pi=TargetProportions.binary(p["pi1"], NUM_STRATA), n=n)


@dataclass(frozen=True)
class SimConfig:
    spec: ModelSpec
    scheme: Scheme
    reps: int
    master_seed: RngSeed
    alpha: float = 0.05
    h1_effect: float = H1_EFFECT
    test_grid: tuple[VarianceKind, ...] = ALL_KINDS

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be positive")
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "test_grid", tuple(VarianceKind(k) for k in self.test_grid))


def _key(model: int, scheme, kind: VarianceKind, side: str) -> tuple:
    return (int(model), Scheme(scheme).value, kind.estimator.value, kind.flavor, side)


@dataclass
class RejectionTable:
    """Rejection rates keyed by (model, scheme, estimator, variance, side), with reps per cell."""

    rates: dict = field(default_factory=dict)
    reps: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def mc_se(self, key) -> float:
        r, m = self.rates[key], self.reps[key]
        return math.sqrt(r * (1 - r) / m)

    def keys(self):
        return sorted(self.rates)

    def merge(self, other: "RejectionTable") -> "RejectionTable":
        clash = set(self.rates) & set(other.rates)
        if clash:
            raise ValueError(f"duplicate cells: {sorted(clash)[:3]}")
        meta = dict(self.meta)
        for k, v in other.meta.items():
            if isinstance(v, (int, float)) and isinstance(meta.get(k), (int, float)) and k != "seed":
                meta[k] = meta[k] + v
            else:
                meta.setdefault(k, v)
        return RejectionTable({**self.rates, **other.rates}, {**self.reps, **other.reps}, meta)

    def restrict(self, keys: Iterable[tuple]) -> "RejectionTable":
        keys = list(keys)
        missing = [k for k in keys if k not in self.rates]
        if missing:
            raise GridMismatchError(f"cells not in table: {missing[:3]}")
        return RejectionTable({k: self.rates[k] for k in keys}, {k: self.reps[k] for k in keys},
                              dict(self.meta))

    def to_csv(self, digits: int = 17) -> str:
        lines = ["# carinf rejection table"]
        lines += [f"# {k}: {v}" for k, v in self.meta.items()]
        lines.append("model,scheme,estimator,variance,side,rate,mc_se,reps")
        for k in self.keys():
            r = self.rates[k]
            lines.append(",".join(map(str, k)) + f",{r:.{digits}g},{self.mc_se(k):.{digits}g},{self.reps[k]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "RejectionTable":
        meta, rates, reps = {}, {}, {}
        header = None
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    k, v = body.split(":", 1)
                    meta[k.strip()] = v.strip()
                continue
            cols = line.split(",")
            if header is None:
                header = cols
                need = ["model", "scheme", "estimator", "variance", "side", "rate"]
                if cols[:6] != need:
                    raise ValueError(f"unexpected header {cols}")
                continue
            row = dict(zip(header, cols))
            key = (int(row["model"]), row["scheme"], row["estimator"], row["variance"], row["side"])
            rates[key] = float(row["rate"])
            reps[key] = int(row.get("reps") or meta.get("reps", 0) or 0)
        return cls(rates, reps, meta)

    def to_text(self) -> str:
        """Wide layout: one row per (model, scheme), rates in percent."""
        rows = sorted({(k[0], k[1]) for k in self.rates})
        cols = [(e, v) for e in ("SAT", "SFE") for v in ("HO", "HC", "NEW")]
        head = "model scheme side " + " ".join(f"{e}-{v:>3}" for e, v in cols)
        out = [head]
        for side in SIDES:
            for m, s in rows:
                vals = []
                for e, v in cols:
                    r = self.rates.get((m, s, e, v, side))
                    vals.append(" " * 7 if r is None else f"{100 * r:7.2f}")
                out.append(f"{m:>5} {s:>6} {side:>4} " + " ".join(vals))
        return "\n".join(out) + "\n"


def _replicate_chunk(task) -> tuple[np.ndarray, int, int]:
    spec, scheme, master, start, stop, grid, hyp, h1_effect = task
    balance = balance_profile(scheme, spec.num_strata)
    spec_h1 = replace(spec, mu1=spec.mu1 + h1_effect)
    crit = critical_value(hyp.rank, hyp.alpha)
    hits = np.zeros((2, len(grid)), dtype=np.int64)
    retries = 0
    redrawn = 0
    for k in range(start, stop):
        rep_seed = master.child(k)
        for attempt in range(MAX_RETRIES + 1):
            seed = rep_seed if attempt == 0 else rep_seed.spawn(TAG_RETRY, attempt)
            ds = simulate_dataset(spec, scheme, seed)
            if not count_cells(ds).empty_cells():
                break
        else:
            raise RuntimeError(f"replication {k}: empty cells after {MAX_RETRIES} retries")
        retries += attempt
        redrawn += attempt > 0
        # same seed under H1: common random numbers, only mu1 differs
        for side, d in enumerate((ds, simulate_dataset(spec_h1, scheme, seed))):
            sat = fit_saturated(d)
            sfe = fit_sfe(d)
            mats = estimate_all(sat, sfe, grid, balance)
            for j, kind in enumerate(grid):
                v = mats[kind]
                theta = sat.theta if kind.estimator is EstimatorKind.SAT else sfe.beta
                hits[side, j] += wald_statistic(theta, v, hyp, d.n) > crit
    return hits, retries, redrawn


def _tasks(config: SimConfig, spec: ModelSpec):
    hyp = LinearHypothesis.identity(spec.pi.num_treatments, config.alpha)
    for start in range(0, config.reps, CHUNK):
        yield (spec, config.scheme, config.master_seed, start, min(config.reps, start + CHUNK),
               config.test_grid, hyp, config.h1_effect)


def _collect(configs: Sequence[SimConfig], threads: int) -> list[tuple[np.ndarray, int, int]]:
    specs = [with_centering(c.spec) for c in configs]
    plan = [(i, t) for i, c in enumerate(configs) for t in _tasks(c, specs[i])]
    if threads <= 1:
        results = [_replicate_chunk(t) for _, t in plan]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_replicate_chunk, [t for _, t in plan]))
    out = []
    for i, c in enumerate(configs):
        hits = np.zeros((2, len(c.test_grid)), dtype=np.int64)
        retries = redrawn = 0
        for (j, _), (h, r, d) in zip(plan, results):
            if j == i:
                hits += h
                retries += r
                redrawn += d
        out.append((hits, retries, redrawn))
    return out


def _as_table(config: SimConfig, hits: np.ndarray, retries: int, redrawn: int) -> RejectionTable:
    rates, reps = {}, {}
    for side_i, side in enumerate(SIDES):
        for j, kind in enumerate(config.test_grid):
            key = _key(config.spec.model_id, config.scheme, kind, side)
            rates[key] = hits[side_i, j] / config.reps
            reps[key] = config.reps
    meta = {"retries": retries, "redrawn_reps": redrawn}
    return RejectionTable(rates, reps, meta)


def run_study(config: SimConfig, threads: int | None = None) -> RejectionTable:
    """Rejection rates of every test in the grid under H0 and H1 for one design."""
    threads = default_threads() if threads is None else threads
    (hits, retries, redrawn), = _collect([config], threads)
    return _as_table(config, hits, retries, redrawn)


def row_seed(seed: int, model_id: int, scheme: Scheme | str) -> RngSeed:
    """Master seed for one (model, scheme) row; independent of which other rows run."""
    return RngSeed(seed, derive_key(model_id, 1 if Scheme(scheme) is Scheme.SRS else 2))


def run_table(table_id: str, reps: int = 10_000, seed: int = 7, threads: int | None = None,
              models: Sequence[int] = (1, 2, 3, 4), schemes: Sequence[str] = ("SRS", "SBR"),
              test_grid: Sequence[VarianceKind] = ALL_KINDS, alpha: float = 0.05) -> RejectionTable:
    threads = default_threads() if threads is None else threads
    configs = [SimConfig(table_spec(table_id, m), Scheme(s), reps, row_seed(seed, m, s), alpha,
                         test_grid=tuple(test_grid))
               for m in models for s in schemes]
    # the SFE estimator need not be consistent when targets vary across strata
    constant = all(c.spec.pi.is_constant() for c in configs)
    table = RejectionTable(meta={"table": table_id, "seed": seed, "reps": reps,
                                 "pi_constant": "yes" if constant else "no"})
    for c, (hits, retries, redrawn) in zip(configs, _collect(configs, threads)):
        table = table.merge(_as_table(c, hits, retries, redrawn))
    return table


def load_reference(table_id: str) -> RejectionTable:
    """Published rejection rates for a table, as fractions."""
    if table_id not in TABLES:
        raise ValueError(f"unknown table {table_id!r}")
    text = resources.files("carinf").joinpath("golden", f"{table_id}.csv").read_text()
    return RejectionTable.from_csv(text)


@dataclass(frozen=True)
class ComparisonReport:
    passed: bool
    max_abs_diff_pp: float
    failures: tuple        # (key, rate, reference, diff_pp)
    cells: int

    def summary(self) -> str:
        head = (f"{'PASS' if self.passed else 'FAIL'}: {self.cells} cells, "
                f"max |diff| = {self.max_abs_diff_pp:.2f} pp")
        lines = [head] + [f"  {k}: {100 * r:.2f} vs {100 * ref:.2f} ({d:+.2f} pp)"
                          for k, r, ref, d in self.failures]
        return "\n".join(lines)


def compare_to_reference(table: RejectionTable, reference: RejectionTable, tol_pp: float,
                         keys: Iterable[tuple] | None = None) -> ComparisonReport:
    """Cell-wise comparison in percentage points; grids must match unless ``keys`` is given."""
    if keys is None:
        if set(table.rates) != set(reference.rates):
            raise GridMismatchError("table and reference cover different cells")
        keys = table.keys()
    else:
        keys = sorted(keys)
        missing = [k for k in keys if k not in table.rates or k not in reference.rates]
        if missing:
            raise GridMismatchError(f"cells missing: {missing[:3]}")
    failures = []
    worst = 0.0
    for k in keys:
        d = 100.0 * (table.rates[k] - reference.rates[k])
        worst = max(worst, abs(d))
        if abs(d) > tol_pp:
            failures.append((k, table.rates[k], reference.rates[k], d))
    return ComparisonReport(not failures, worst, tuple(failures), len(keys))


def write_table(table: RejectionTable, path: str | Path) -> None:
    Path(path).write_text(table.to_csv())
