"""Command-line interface.

Exit codes: 0 success, 2 bad input, 3 estimation failure, 4 reference check failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import montecarlo as mc
from . import variance as V
from .core import (BalanceProfile, CarError, Dataset, EmptyCellError, LinearHypothesis,
                   TargetProportions, VarianceKind, validate_dataset)
from .dgp import ModelSpec, ORACLE_SEED, population_moments
from .estimators import ate_saturated, ate_sfe, fit_saturated, fit_sfe
from .hypothesis import coefficient_report, critical_value, wald_test
from .power import LocalPowerProblem, local_power
from .rng import RngSeed
from .special import noncentral_chi2_sf

EXIT_OK, EXIT_INPUT, EXIT_ESTIMATION, EXIT_CHECK = 0, 2, 3, 4
# deviation of per-stratum treatment shares above which SFE output carries a warning
SHARE_SPREAD_NOTE = 0.1


class InputError(Exception):
    pass


def _g(x: float) -> str:
    # shortest text that reads back to the same double
    return repr(float(x))


# ------------------------------------------------------------ data input

@dataclass
class LoadedData:
    dataset: Dataset
    strata_labels: list[str]


def read_dataset_csv(text: str) -> LoadedData:
    """Parse ``y,a,s`` CSV text; strata are coded 1.. by first appearance."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError("empty input")
    header = [c.strip().lower() for c in rows[0]]
    if header != ["y", "a", "s"]:
        raise InputError(f"line 1: expected header 'y,a,s', got {','.join(rows[0])!r}")
    ys, as_, ss = [], [], []
    codes: dict[str, int] = {}
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != 3:
            raise InputError(f"line {lineno}: expected 3 fields, got {len(r)}")
        try:
            y = float(r[0])
        except ValueError:
            raise InputError(f"line {lineno}: outcome {r[0]!r} is not a number") from None
        try:
            a = int(r[1].strip())
        except ValueError:
            raise InputError(f"line {lineno}: treatment {r[1]!r} is not an integer") from None
        if a < 0:
            raise InputError(f"line {lineno}: treatment labels must be >= 0")
        lab = r[2].strip()
        codes.setdefault(lab, len(codes) + 1)
        ys.append(y)
        as_.append(a)
        ss.append(codes[lab])
    if not ys:
        raise InputError("no data rows")
    k = max(as_)
    if k < 1:
        raise InputError("no treated units (all a = 0)")
    ds = Dataset(np.array(ys), np.array(as_), np.array(ss), k, len(codes))
    return LoadedData(ds, list(codes))


def write_dataset_csv(dataset: Dataset, labels: Sequence[str] | None = None) -> str:
    out = ["y,a,s"]
    for y, a, s in dataset.observations():
        lab = labels[s - 1] if labels is not None else str(s)
        out.append(f"{_g(y)},{a},{lab}")
    return "\n".join(out) + "\n"


def read_hypothesis_file(text: str, num_treatments: int, alpha: float) -> LinearHypothesis:
    """Each non-comment line holds one row of Psi followed by the matching entry of c."""
    psi, c = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise InputError(f"hypothesis line {lineno}: not numeric") from None
        if len(vals) != num_treatments + 1:
            raise InputError(f"hypothesis line {lineno}: expected {num_treatments + 1} numbers")
        psi.append(vals[:-1])
        c.append(vals[-1])
    if not psi:
        raise InputError("hypothesis file has no rows")
    try:
        return LinearHypothesis(np.array(psi), np.array(c), alpha)
    except ValueError as e:
        raise InputError(f"hypothesis file: {e}") from None


# ------------------------------------------------------------ rendering

def _render(header: list[str], rows: list[list], fmt: str) -> str:
    if fmt == "csv":
        lines = [",".join(header)]
        lines += [",".join(_g(v) if isinstance(v, float) else str(v) for v in r) for r in rows]
        return "\n".join(lines) + "\n"
    cells = [[f"{v:.4g}" if isinstance(v, float) else str(v) for v in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(lines) + "\n"


def _matrix_text(name: str, m: np.ndarray, fmt: str) -> str:
    if fmt == "csv":
        return "".join(f"# {name}[{i + 1}]," + ",".join(_g(x) for x in row) + "\n"
                       for i, row in enumerate(m))
    body = "\n".join("  " + "  ".join(f"{x:10.4f}" for x in row) for row in m)
    return f"{name}:\n{body}\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ------------------------------------------------------------ analyze

_KINDS = {("sat", "ho"): VarianceKind.HO_SAT, ("sat", "hc"): VarianceKind.HC_SAT,
          ("sat", "new"): VarianceKind.NEW_SAT, ("sfe", "ho"): VarianceKind.HO_SFE,
          ("sfe", "hc"): VarianceKind.HC_SFE, ("sfe", "new"): VarianceKind.NEW_SFE}


def cmd_analyze(args) -> int:
    try:
        text = Path(args.input).read_text()
    except OSError as e:
        print(f"error: cannot read {args.input}: {e}", file=sys.stderr)
        return EXIT_INPUT
    try:
        loaded = read_dataset_csv(text)
        kinds = [v.strip().lower() for v in args.variance.split(",") if v.strip()]
        if not kinds or any(v not in ("ho", "hc", "new") for v in kinds):
            raise InputError("--variance takes a comma list drawn from ho,hc,new")
        ests = ["sat", "sfe"] if args.estimator == "both" else [args.estimator]
        ds = loaded.dataset
        hyp = None
        if args.hypothesis:
            hyp = read_hypothesis_file(Path(args.hypothesis).read_text(), ds.num_treatments, args.alpha)
    except (InputError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    problems = validate_dataset(ds)
    fatal = [p for p in problems if not p.startswith("empty cell")]
    if fatal:
        for p in fatal:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_INPUT
    if problems:
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_ESTIMATION
    balance = BalanceProfile.uniform(args.tau, ds.num_strata)
    try:
        sat = fit_saturated(ds)
        sfe = fit_sfe(ds) if "sfe" in ests else None
        mats = V.estimate_all(sat, sfe, [_KINDS[(e, v)] for e in ests for v in kinds
                                         if e == "sat" or sfe is not None], balance)
    except (CarError, EmptyCellError, np.linalg.LinAlgError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ESTIMATION
    z = _z_for(args.alpha)
    rows, tests = [], []
    for e in ests:
        est = ate_saturated(sat) if e == "sat" else ate_sfe(sfe)
        for v in kinds:
            m = mats[_KINDS[(e, v)]]
            try:
                for a in range(1, ds.num_treatments + 1):
                    r = coefficient_report(est, m, a, z=z)
                    rows.append([e, v, a, r.estimate, r.std_error, r.z_stat, r.p_value, r.ci_low, r.ci_high])
                if hyp is not None:
                    t = wald_test(est, m, hyp)
                    tests.append([e, v, t.df, t.statistic, t.critical_value, t.p_value, int(t.reject)])
            except CarError as err:
                print(f"error: {e}/{v}: {err}", file=sys.stderr)
                return EXIT_ESTIMATION
    lo = f"ci_low_{100 * (1 - args.alpha):g}"
    hi = f"ci_high_{100 * (1 - args.alpha):g}"
    out = []
    mapping = ", ".join(f"{i + 1}={lab}" for i, lab in enumerate(loaded.strata_labels))
    out.append(f"# n={ds.n} treatments={ds.num_treatments} strata: {mapping}\n")
    if sfe is not None:
        pis = sfe.counts.pi_hat
        spread = float(np.max(np.abs(pis - pis.mean(axis=1, keepdims=True))))
        if spread > SHARE_SPREAD_NOTE:
            out.append(f"# note: treatment shares vary across strata (max deviation {spread:.3f}); "
                       "the SFE estimator need not be consistent for the ATE\n")
    out.append(_render(["estimator", "variance", "treatment", "coef", "se", "t_stat", "p_value", lo, hi],
                       rows, args.format))
    if tests:
        out.append(_render(["estimator", "variance", "df", "wald", "critical", "p_value", "reject"],
                           tests, args.format))
    if args.show_components:
        out.append(_matrix_text("V_H", V.v_h_hat(sat), args.format))
        out.append(_matrix_text("V_hc", V.v_hc_saturated(sat).matrix, args.format))
    _emit("".join(out), args.out)
    return EXIT_OK


def _z_for(alpha: float) -> float:
    # two-sided normal critical value: sqrt of the chi2_1 quantile
    return math.sqrt(critical_value(1, alpha))


# ------------------------------------------------------------ simulate

def _check_keys(table: mc.RejectionTable, scope: str):
    keys = table.keys()
    if scope == "h0":
        return [k for k in keys if k[4] == "H0"]
    if scope == "new-h0":
        return [k for k in keys if k[4] == "H0" and k[3] == "NEW"]
    return keys


def cmd_simulate(args) -> int:
    try:
        models = [int(m) for m in args.models.split(",")]
        schemes = [s.strip().upper() for s in args.schemes.split(",")]
        if any(m not in (1, 2, 3, 4) for m in models) or any(s not in ("SRS", "SBR") for s in schemes):
            raise ValueError("models must be in 1..4 and schemes in SRS,SBR")
        if args.reps < 1:
            raise ValueError("--reps must be positive")
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    table = mc.run_table(args.table, reps=args.reps, seed=args.seed, threads=args.threads,
                         models=models, schemes=schemes)
    text = table.to_csv() if args.format == "csv" else table.to_text()
    _emit(text, args.out)
    if args.check:
        ref = mc.load_reference(args.table)
        report = mc.compare_to_reference(table, ref, args.tol_pp, _check_keys(table, args.check_cells))
        print(report.summary(), file=sys.stderr)
        if not report.passed:
            return EXIT_CHECK
    return EXIT_OK


# ------------------------------------------------------------ power

def _floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"{what}: expected a comma list of numbers") from None
    if not vals:
        raise InputError(f"{what}: empty list")
    return vals


def cmd_power(args) -> int:
    try:
        if not (0 < args.alpha < 1):
            raise InputError("--alpha must lie in (0, 1)")
        if args.mu is not None:
            return _power_mu(args)
        if args.model is None:
            raise InputError("give either --mu or --model")
        return _power_model(args)
    except (InputError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


def _power_mu(args) -> int:
    mus = _floats(args.mu, "--mu")
    if args.df < 1 or any(m < 0 for m in mus):
        raise InputError("need df >= 1 and mu >= 0")
    crit = critical_value(args.df, args.alpha)
    rows = [[m, args.alpha if m == 0 else noncentral_chi2_sf(crit, args.df, m), "closed_form"]
            for m in mus]
    _emit(_render(["mu", "power", "method"], rows, args.format), args.out)
    return EXIT_OK


def _power_model(args) -> int:
    effects = _floats(args.effects, "--effects")
    if not (0 < args.pi < 1):
        raise InputError("--pi must lie in (0, 1)")
    if args.n < 1:
        raise InputError("--n must be positive")
    spec = ModelSpec(args.model, gamma=args.gamma, sigma1=args.sigma1, num_strata=args.strata,
                     pi=TargetProportions.binary(args.pi, args.strata))
    mom = population_moments(spec, args.budget, ORACLE_SEED)
    tau = 1.0 if args.scheme == "srs" else 0.0
    bal = BalanceProfile.uniform(tau, args.strata)
    pi = spec.pi
    if args.estimator == "sat":
        v = V.v_analytic_sat(mom, pi)
        stud = {"new": v, "hc": V.limit_hc_sat(mom, pi), "ho": V.limit_ho_sat(mom, pi)}[args.variance]
    else:
        v = V.v_analytic_sfe(mom, pi, bal)
        stud = {"new": v, "hc": V.limit_hc_sfe(mom, pi), "ho": V.limit_ho_sfe(mom, pi)}[args.variance]
    exact = np.linalg.norm(v - stud) <= 1e-10 * np.linalg.norm(v)
    rows = []
    for eff in effects:
        lam = math.sqrt(args.n) * eff
        prob = LocalPowerProblem(v, stud, np.eye(1), [lam], args.alpha)
        if exact:
            res = local_power(prob, "closed_form")
        else:
            res = local_power(prob, "monte_carlo", mc_reps=args.mc_reps, seed=RngSeed(args.seed))
        rows.append([eff, lam, prob.noncentrality(), res.power, res.std_error, res.method])
    _emit(_render(["effect", "lambda", "mu", "power", "mc_se", "method"], rows, args.format), args.out)
    return EXIT_OK


# ------------------------------------------------------------ moments

def cmd_moments(args) -> int:
    try:
        if args.budget < 2:
            raise InputError("--budget must be at least 2")
        spec = ModelSpec(args.model, gamma=args.gamma, sigma1=args.sigma1, num_strata=args.strata,
                         pi=TargetProportions.binary(args.pi, args.strata))
    except (InputError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    mom = population_moments(spec, args.budget, RngSeed(args.seed))
    if args.out:
        mom.save(args.out)
    d = mom.cond_m[1] - mom.cond_m[0]
    vh = float(mom.p_s @ d ** 2)
    se_d = np.hypot(mom.se_cond_m[1], mom.se_cond_m[0]) if mom.se_cond_m is not None else np.zeros_like(d)
    vh_se = float(np.sqrt(np.sum((2 * mom.p_s * d * se_d) ** 2)))
    rows = [["V_H", vh, vh_se],
            ["V_Y", V.varsigma_y2(mom, args.pi), float("nan")],
            ["V_sat", vh + V.varsigma_y2(mom, args.pi), float("nan")],
            ["M_0", float(mom.big_m[0]), float(mom.se_big_m[0]) if mom.se_big_m is not None else float("nan")],
            ["M_1", float(mom.big_m[1]), float(mom.se_big_m[1]) if mom.se_big_m is not None else float("nan")]]
    sys.stdout.write(_render(["quantity", "value", "mc_se"], rows, args.format))
    return EXIT_OK


# ------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carinf", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="estimate ATEs from a y,a,s CSV file")
    a.add_argument("input")
    a.add_argument("--estimator", choices=["sat", "sfe", "both"], default="sat")
    a.add_argument("--variance", default="new", help="comma list of ho,hc,new (default new)")
    a.add_argument("--hypothesis", help="file with rows 'psi_1 ... psi_K c' for a joint Wald test")
    a.add_argument("--tau", type=float, default=0.0,
                   help="assignment imbalance tau in [0,1] for the SFE new estimator (0 = strong balance)")
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--show-components", action="store_true")
    a.add_argument("--format", choices=["csv", "table"], default="table")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="rerun a rejection-rate table")
    s.add_argument("table", choices=sorted(mc.TABLES))
    s.add_argument("--reps", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--threads", type=int, default=None, help="worker processes (default $CARINF_THREADS or 1)")
    s.add_argument("--models", default="1,2,3,4")
    s.add_argument("--schemes", default="SRS,SBR")
    s.add_argument("--check", action="store_true", help="compare with the published table")
    s.add_argument("--tol-pp", type=float, default=1.5)
    s.add_argument("--check-cells", choices=["all", "h0", "new-h0"], default="all")
    s.add_argument("--format", choices=["csv", "table"], default="csv")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("power", help="local power of Wald tests")
    w.add_argument("--mu", help="comma list of noncentralities (closed form)")
    w.add_argument("--df", type=int, default=1)
    w.add_argument("--model", type=int, choices=[1, 2, 3, 4])
    w.add_argument("--pi", type=float, default=0.5)
    w.add_argument("--gamma", type=float, default=1.0)
    w.add_argument("--sigma1", type=float, default=1.0)
    w.add_argument("--strata", type=int, default=10)
    w.add_argument("--scheme", choices=["srs", "sbr"], default="sbr")
    w.add_argument("--estimator", choices=["sat", "sfe"], default="sat")
    w.add_argument("--variance", choices=["ho", "hc", "new"], default="new")
    w.add_argument("--effects", default="0,0.1,0.2,0.3")
    w.add_argument("--n", type=int, default=500)
    w.add_argument("--budget", type=int, default=1_000_000)
    w.add_argument("--mc-reps", type=int, default=200_000)
    w.add_argument("--seed", type=int, default=1)
    w.add_argument("--alpha", type=float, default=0.05)
    w.add_argument("--format", choices=["csv", "table"], default="csv")
    w.add_argument("--out")
    w.set_defaults(func=cmd_power)

    m = sub.add_parser("moments", help="population moments of a simulation design")
    m.add_argument("--model", type=int, choices=[1, 2, 3, 4], required=True)
    m.add_argument("--gamma", type=float, default=1.0)
    m.add_argument("--sigma1", type=float, default=1.0)
    m.add_argument("--strata", type=int, default=10)
    m.add_argument("--pi", type=float, default=0.5)
    m.add_argument("--budget", type=int, default=10_000_000)
    m.add_argument("--seed", type=int, default=ORACLE_SEED.seed)
    m.add_argument("--format", choices=["csv", "table"], default="table")
    m.add_argument("--out")
    m.set_defaults(func=cmd_moments)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
