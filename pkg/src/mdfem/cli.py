"""Command line entry point: plan, run, study, baseline, validate."""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import math
import sys
import time
from typing import Callable

import numpy as np

from . import anchored
from .activeset import active_set_bruteforce, build_active_set, diagnostics
from .config import ConfigError, RunConfig, load_config
from .driver import (PlanError, RuleSource, baseline_parameters, plan_for_epsilon,
                     run_deterministic, run_randomized, single_level_baseline)
from .fem1d import FemError, FemSolver, Mesh1D
from .gf2poly import GF2Error
from .oracles import MAX_ORACLE_DIM, gauss_legendre, subset_sum_bruteforce, tensor_gauss_reference
from .polylattice import (LatticeError, VectorCache, _cbc_direct, _cbc_fast, _modulus_for,
                          generate_points, generate_points_direct, point_ints)
from .problemspec import (AdmissibilityError, DiffusionModel, FiniteWeights, ProblemSpec,
                          SmoothSineFamily, compute_kappa, product_weight_sum)

log = logging.getLogger("mdfem")

CSV_HEADER = ["epsilon", "value", "ref_value", "abs_error", "rmse", "cost_units", "wall_ms",
              "active_set_size", "max_cardinality", "seed"]

EXIT_CONFIG, EXIT_ADMISSIBILITY, EXIT_NUMERICAL = 2, 3, 4


def _fmt(x: float) -> str:
    return repr(float(x))


def _rules(cfg: RunConfig) -> RuleSource:
    return RuleSource(strategy=cfg["plan.strategy"], cache=VectorCache(cfg["plan.cache"] or None),
                      candidates=cfg["plan.candidates"], seed=cfg["run.seed"])


def _mode(cfg: RunConfig, rates) -> str:
    mode = cfg["run.mode"]
    if mode not in ("auto", "deterministic", "randomized"):
        raise ConfigError(f"run.mode must be auto, deterministic or randomized, got {mode!r}")
    if mode != "auto" and mode != rates.mode:
        raise AdmissibilityError(f"lambda = {rates.lam:.4g} selects the {rates.mode} branch, "
                                 f"not {mode}")
    return rates.mode


def _execute(cfg: RunConfig, problem: ProblemSpec, rates, eps: float, seed: int, rules: RuleSource):
    aset, plan = plan_for_epsilon(problem, eps, rates, cfg["run.fem_constant"], cfg["run.degree"])
    if _mode(cfg, rates) == "deterministic":
        res = run_deterministic(plan, problem, rules, threads=cfg["run.threads"])
    else:
        res = run_randomized(plan, problem, rules, shifts=cfg["run.shifts"], seed=seed,
                             threads=cfg["run.threads"])
    return aset, plan, res


def _reference(cfg: RunConfig, problem: ProblemSpec):
    s = cfg["oracle.s"] if cfg["oracle.s"] is not None else problem.model.size
    if s is None or s > MAX_ORACLE_DIM:
        raise PlanError(f"oracle infeasible: needs a truncated model with at most "
                        f"{MAX_ORACLE_DIM} terms (set problem.n_terms)")
    return tensor_gauss_reference(problem, s, cfg["oracle.quad_degree"], cfg["oracle.h_fine"])


def _write_csv(cfg: RunConfig, rows: list[list[str]], out) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(rows)
    path = cfg["output.csv"]
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        out.write(buf.getvalue())


# ---------------------------------------------------------------------------
# subcommands


def cmd_plan(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    problem = cfg.problem()
    kappa = compute_kappa(problem.model)
    rates = problem.rates(kappa)
    print(f"kappa <= {kappa:.6g}", file=out)
    print(f"lambda = {rates.lam:.6g}  alpha = {rates.alpha}  tau = {rates.tau:g}  "
          f"a_mdm = {rates.a_mdm:.6g}  mode = {rates.mode}", file=out)
    for eps in cfg["run.epsilon"]:
        aset, plan = plan_for_epsilon(problem, eps, rates, cfg["run.fem_constant"], cfg["run.degree"])
        diag = diagnostics(aset)
        print(f"epsilon = {eps:.6g}  |U| = {diag.cardinality}  d = {diag.max_card}  "
              f"predicted_cost = {plan.predicted_cost:.6g}  "
              f"predicted_error2 = {plan.predicted_error2:.6g}", file=out)
        if len(aset) == 1:
            continue
        for rec, wp in zip(plan.records, aset.weight_products):
            label = "{" + ",".join(map(str, rec.u)) + "}"
            print(f"  {label:<16} gamma_u*M_u = {wp:.4e}  h = 2^-{int(round(-math.log2(rec.h)))}"
                  f"  n = 2^{rec.m}", file=out)
    return 0


def cmd_run(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    problem = cfg.problem()
    rates = problem.rates()
    rules = _rules(cfg)
    for eps in cfg["run.epsilon"]:
        aset, plan, res = _execute(cfg, problem, rates, eps, cfg["run.seed"], rules)
        extra = f"  stderr = {res.stderr:.3e}" if res.mode == "randomized" else ""
        print(f"epsilon = {eps:.6g}  value = {res.value:.15g}{extra}  cost_units = "
              f"{res.cost_units:.6g}  |U| = {len(aset)}", file=out)
    return 0


def cmd_study(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    eps_list = cfg["run.epsilon"]
    if len(eps_list) < 3:
        raise ConfigError("study needs at least three epsilon values")
    problem = cfg.problem()
    rates = problem.rates()
    ref = _reference(cfg, problem)
    rules = _rules(cfg)
    wall = cfg["output.wall_clock"]
    reps = cfg["run.replications"]
    rows = []
    for eps in eps_list:
        block = []
        for r in range(reps):
            seed = cfg["run.seed"] + r
            t0 = time.perf_counter()
            aset, plan, res = _execute(cfg, problem, rates, eps, seed, rules)
            ms = int(round((time.perf_counter() - t0) * 1000)) if wall else 0
            block.append((res, aset, seed, ms))
        errs = [res.value - ref.value for res, *_ in block]
        rmse = math.sqrt(math.fsum(e * e for e in errs) / len(errs))
        for (res, aset, seed, ms), e in zip(block, errs):
            rows.append([_fmt(eps), _fmt(res.value), _fmt(ref.value), _fmt(abs(e)), _fmt(rmse),
                         _fmt(res.cost_units), str(ms), str(len(aset)),
                         str(max((len(u) for u in aset.members), default=0)), str(seed)])
    _write_csv(cfg, rows, out)
    return 0


def cmd_baseline(cfg: RunConfig, out=None) -> int:
    """Single-level rows in the study CSV layout (set size and cardinality both report s)."""
    out = out or sys.stdout
    problem = cfg.problem()
    rates = problem.rates()
    ref = _reference(cfg, problem)
    rules = _rules(cfg)
    alpha = cfg["baseline.alpha"] or rates.alpha
    degree = cfg["run.degree"] or max(1, min(3, math.ceil(rates.tau / 2)))
    rows = []
    for eps in cfg["run.epsilon"]:
        s, N, h = baseline_parameters(problem.model, eps, rates.tau, rates.pstar)
        s = cfg["baseline.s"] if cfg["baseline.s"] is not None else s
        N = cfg["baseline.n"] if cfg["baseline.n"] is not None else N
        h = cfg["baseline.h"] or h
        t0 = time.perf_counter()
        b = single_level_baseline(problem, s, N, h, degree=degree, alpha=alpha, rules=rules)
        ms = int(round((time.perf_counter() - t0) * 1000)) if cfg["output.wall_clock"] else 0
        err = abs(b.value - ref.value)
        rows.append([_fmt(eps), _fmt(b.value), _fmt(ref.value), _fmt(err), _fmt(err),
                     _fmt(b.cost_units), str(ms), str(s), str(s), str(cfg["run.seed"])])
    _write_csv(cfg, rows, out)
    return 0


# ---------------------------------------------------------------------------
# validation suite


def _check_telescoping() -> float:
    model = DiffusionModel(SmoothSineFamily(c=0.3, sigma=4), a0=1.0, n_terms=3)
    problem = ProblemSpec(model)
    solver = FemSolver(problem, Mesh1D(32, 1))
    Y = np.random.default_rng(7).random((20, 3)) - 0.5
    cache = anchored.SubsetSolveCache()
    total = np.zeros(len(Y))
    for r in range(4):
        for u in itertools.combinations((1, 2, 3), r):
            total += anchored.decomposed_values(u, Y[:, [j - 1 for j in u]], solver, cache)
    direct = solver.functional_subset((1, 2, 3), Y)
    return float(np.max(np.abs(total - direct)))


def _check_projections() -> float:
    # every one-dimensional projection of a 2^m-point rule is the full dyadic grid
    rule = RuleSource().rule(6, [1.0, 0.5, 0.25, 0.125], 1)
    ints = point_ints(rule)
    worst = 0
    for j in range(rule.s):
        col = np.sort(ints[:, j] >> (53 - rule.m))
        worst = max(worst, int(np.sum(col != np.arange(2 ** rule.m))))
    direct = generate_points_direct(rule) - 0.5
    worst = max(worst, int(np.sum(direct != generate_points(rule).points)))
    return float(worst)


def _check_product_sum() -> float:
    w = FiniteWeights(tuple(2.0 ** -j for j in range(1, 11)))
    lo, hi = product_weight_sum(w, 0.8753, 0.5)
    ref = subset_sum_bruteforce(w, 0.8753, 0.5, 10)
    return 0.0 if lo - 1e-12 <= ref <= hi + 1e-12 else abs(ref - hi)


def _check_plan_constraint() -> float:
    model = DiffusionModel(SmoothSineFamily(c=0.3, sigma=4), a0=1.0, n_terms=6)
    problem = ProblemSpec(model)
    worst = 0.0
    for eps in (0.2, 0.05, 0.01):
        _, plan = plan_for_epsilon(problem, eps)
        worst = max(worst, plan.constraint_residual())
        if plan.predicted_error2 > eps / 2:
            return math.inf
    return worst


def _check_active_set() -> float:
    w = FiniteWeights(tuple(2.0 ** -j for j in range(1, 11)))
    M, p = 0.8753, 0.5
    bad = 0
    for eps in (1e-1, 1e-2, 1e-3):
        aset = build_active_set(w, M, p, eps)
        bad += aset.members != tuple(active_set_bruteforce(w, M, p, eps, 10, aset.S_upper))
    return float(bad)


def _check_cbc() -> float:
    bad = 0
    for m, alpha in ((3, 1), (4, 1), (2, 2)):
        n, p = _modulus_for(m, alpha)
        wts = [0.9, 0.5, 0.3]
        bad += _cbc_fast(m, n, p, wts, alpha) != _cbc_direct(m, n, p, wts, alpha)
    return float(bad)


def _check_gauss() -> float:
    x, w = gauss_legendre(12)
    xr, wr = np.polynomial.legendre.leggauss(12)
    return float(max(np.max(np.abs(x - xr)), np.max(np.abs(w - wr))))


VALIDATION: list[tuple[str, Callable[[], float], float]] = [
    ("telescoping", _check_telescoping, 1e-12),
    ("net projections", _check_projections, 0.0),
    ("product sum", _check_product_sum, 0.0),
    ("plan constraint", _check_plan_constraint, 1e-8),
    ("active set", _check_active_set, 0.0),
    ("fast cbc", _check_cbc, 0.0),
    ("gauss-legendre", _check_gauss, 1e-13),
]


def cmd_validate(cfg: RunConfig | None = None, out=None, fault: str | None = None) -> int:
    out = out or sys.stdout
    anchored.FAULT = fault
    failures = 0
    try:
        for name, check, tol in VALIDATION:
            try:
                val = check()
                ok = val <= tol
            except Exception as exc:  # a crashing check is a failing check
                val, ok = float("nan"), False
                log.error("%s raised %s", name, exc)
            failures += not ok
            print(f"{'PASS' if ok else 'FAIL'}  {name:<16} {val:.3e} (tol {tol:g})", file=out)
    finally:
        anchored.FAULT = None
    return 0 if failures == 0 else EXIT_NUMERICAL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mdfem", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("plan", "run", "study", "baseline", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="section.key = value file")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--cache", help="generating vector cache directory")
        p.add_argument("--out", help="CSV output path")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config entry")
        if name == "validate":
            p.add_argument("--inject-fault", choices=["sign"], help=argparse.SUPPRESS)
    return ap


def _apply_overrides(cfg: RunConfig, args) -> None:
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        cfg.set(k.strip(), v.strip())
    if args.seed is not None:
        cfg.set("run.seed", args.seed)
    if args.threads is not None:
        cfg.set("run.threads", args.threads)
    if args.cache is not None:
        cfg.set("plan.cache", args.cache)
    if args.out is not None:
        cfg.set("output.csv", args.out)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        if args.command == "validate":
            return cmd_validate(cfg, fault=args.inject_fault)
        return {"plan": cmd_plan, "run": cmd_run, "study": cmd_study,
                "baseline": cmd_baseline}[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AdmissibilityError as exc:
        print(f"inadmissible: {exc}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    except (PlanError, LatticeError, GF2Error, FemError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
