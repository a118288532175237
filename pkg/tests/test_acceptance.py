"""End-to-end acceptance checks.  Each test records one PASS/FAIL line."""

import csv
import io
import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest

from mdfem import anchored
from mdfem.activeset import active_set_bruteforce, build_active_set
from mdfem.cli import main
from mdfem.config import load_config
from mdfem.driver import plan_for_epsilon
from mdfem.fem1d import FemSolver, Mesh1D, convergence_order
from mdfem.oracles import tensor_gauss_reference
from mdfem.polylattice import DigitalShift, generate_points, search_generating_vector
from mdfem.problemspec import (DiffusionModel, FiniteWeights, Functional, ProblemSpec,
                               SmoothSineFamily)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
REPORT: list[str] = []


def record(n: int, ok: bool, detail: str, t0: float) -> None:
    REPORT.append(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  "
                  f"({time.perf_counter() - t0:.1f} s)")
    print(REPORT[-1])
    assert ok, detail


def slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def read_csv(path: Path) -> list[dict]:
    return list(csv.DictReader(io.StringIO(path.read_text())))


def study(cfg_name: str, tmp: Path, tag: str, command: str, *extra: str) -> Path:
    out = tmp / f"{tag}.csv"
    rc = main([command, "--config", str(CONFIGS / cfg_name), "--out", str(out),
               "--set", "output.wall_clock=false", *extra])
    assert rc == 0
    return out


# ---------------------------------------------------------------------------


def test_1_telescoping():
    t0 = time.perf_counter()
    model = DiffusionModel(SmoothSineFamily(c=0.3, sigma=4), a0=1.0, n_terms=3)
    problem = ProblemSpec(model, f_name="exp", G=Functional(g_name="cos"))
    solver = FemSolver(problem, Mesh1D(64, 1))
    Y = np.random.default_rng(2024).random((50, 3)) - 0.5
    cache = anchored.SubsetSolveCache()
    total = np.zeros(len(Y))
    for r in range(4):
        for u in itertools.combinations((1, 2, 3), r):
            total += anchored.decomposed_values(u, Y[:, [j - 1 for j in u]], solver, cache)
    err = float(np.max(np.abs(total - solver.functional_batch(Y))))
    record(1, err <= 1e-12, f"telescoping max deviation {err:.2e} (tol 1e-12)", t0)


def test_2_active_set():
    t0 = time.perf_counter()
    w = FiniteWeights(tuple(2.0 ** -j for j in range(1, 11)))
    M, p = 0.8753, 0.5
    subsets = [v for r in range(11) for v in itertools.combinations(range(1, 11), r)]
    ok, worst = True, 0.0
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        aset = build_active_set(w, M, p, eps)
        ok &= aset.members == tuple(active_set_bruteforce(w, M, p, eps, 10, aset.S_upper))
        members = set(aset.members)
        tail = math.fsum(w.gamma_u(v) * M ** len(v) for v in subsets if v not in members)
        ok &= tail <= eps / 2
        worst = max(worst, tail / (eps / 2))
    record(2, ok, f"DFS == brute force, worst truncation / (eps/2) = {worst:.3g}", t0)


def test_3_plan_constraint():
    t0 = time.perf_counter()
    worst, ok, count = 0.0, True, 0
    for name in ("randomized.cfg", "deterministic.cfg", "baseline.cfg"):
        cfg = load_config(CONFIGS / name)
        problem = cfg.problem()
        for eps in cfg["run.epsilon"]:
            _, plan = plan_for_epsilon(problem, eps)
            worst = max(worst, plan.constraint_residual())
            ok &= plan.predicted_error2 <= eps / 2
            count += 1
    ok &= worst <= 1e-8
    record(3, ok, f"{count} plans, worst relative residual {worst:.2e}", t0)


def test_4_fem_rates():
    t0 = time.perf_counter()
    model = DiffusionModel(SmoothSineFamily(c=0.3, sigma=4), a0=1.0, n_terms=6)
    problem = ProblemSpec(model, f_name="exp", G=Functional(g_name="cos"))
    y = [0.5, -0.5, 0.4, -0.3, 0.5, 0.5]
    hs = [2.0 ** -k for k in range(4, 10)]
    p1 = convergence_order(problem, y, 1, hs).eoc
    p2 = convergence_order(problem, y, 2, hs).eoc
    ok = all(1.9 <= e <= 2.1 for e in p1) and all(3.8 <= e <= 4.2 for e in p2)
    record(4, ok, f"EOC P1 {min(p1):.3f}..{max(p1):.3f}, P2 {min(p2):.3f}..{max(p2):.3f}", t0)


def _product(y):
    return np.prod(1 + 0.5 * (y + y * y), axis=1)


def test_5_cubature_rates():
    t0 = time.perf_counter()
    exact = (1 + 0.5 / 12) ** 3
    ms = np.arange(6, 13)
    rmse = []
    for m in ms:
        rule = search_generating_vector(int(m), 3, [1.0, 1.0, 1.0])
        errs = [np.mean(_product(generate_points(rule, DigitalShift.from_key(11, int(m), r, s=3))
                                 .points)) - exact for r in range(20)]
        rmse.append(math.sqrt(np.mean(np.square(errs))))
    s1 = slope(2.0 ** ms, rmse)
    ms2 = np.arange(4, 11)
    errs2 = [abs(np.mean(_product(generate_points(
        search_generating_vector(int(m), 3, [1.0, 1.0, 1.0], alpha=2)).points)) - exact)
        for m in ms2]
    s2 = slope(2.0 ** ms2, errs2)
    record(5, s1 <= -0.85 and s2 <= -1.5,
           f"shifted PLR RMSE slope {s1:.3f} (<= -0.85), HOPLR slope {s2:.3f} (<= -1.5)", t0)


# ---------------------------------------------------------------------------
# end-to-end runs; one randomized study serves criteria 6, 7 and 10


@pytest.fixture(scope="module")
def randomized_runs(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("rand")
    t0 = time.perf_counter()
    a = study("randomized.cfg", tmp, "t1", "study", "--seed", "0", "--threads", "1")
    elapsed = time.perf_counter() - t0
    return a, tmp, elapsed


@pytest.mark.slow
def test_6_randomized_error(randomized_runs):
    t0 = time.perf_counter() - randomized_runs[2]
    cfg = load_config(CONFIGS / "randomized.cfg")
    ref = tensor_gauss_reference(cfg.problem(), 6, cfg["oracle.quad_degree"], cfg["oracle.h_fine"])
    rows = read_csv(randomized_runs[0])
    ok = ref.error_estimate <= min(cfg["run.epsilon"]) / 10
    parts = []
    for eps in cfg["run.epsilon"]:
        block = [r for r in rows if float(r["epsilon"]) == eps]
        assert len(block) == cfg["run.replications"]
        rmse = float(block[0]["rmse"])
        ok &= rmse <= eps
        parts.append(f"{rmse / eps:.3f}")
    record(6, ok, f"RMSE/eps per eps [{', '.join(parts)}], oracle estimate "
                  f"{ref.error_estimate:.1e}", t0)


@pytest.mark.slow
def test_7_cost_exponent(randomized_runs):
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / "randomized.cfg")
    a_mdm = cfg.problem().rates().a_mdm
    rows = read_csv(randomized_runs[0])
    eps = sorted({float(r["epsilon"]) for r in rows})
    cost = [float(next(r for r in rows if float(r["epsilon"]) == e)["cost_units"]) for e in eps]
    s = slope([1 / e for e in eps], cost)
    record(7, s <= a_mdm + 0.4, f"cost slope {s:.3f} (<= {a_mdm:g} + 0.4)", t0)


@pytest.mark.slow
def test_8_deterministic(tmp_path):
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / "deterministic.cfg")
    rates = cfg.problem().rates()
    rows = read_csv(study("deterministic.cfg", tmp_path, "det", "study"))
    eps = [float(r["epsilon"]) for r in rows]
    errs = [float(r["abs_error"]) for r in rows]
    s = slope([1 / e for e in eps], [float(r["cost_units"]) for r in rows])
    ok = rates.mode == "deterministic" and all(e <= x for e, x in zip(errs, eps)) and s <= 1.9
    record(8, ok, f"lambda {rates.lam:.3g}, alpha {rates.alpha}, max err/eps "
                  f"{max(e / x for e, x in zip(errs, eps)):.2e}, cost slope {s:.3f} (<= 1.9)", t0)


@pytest.mark.slow
def test_9_baseline_comparison(tmp_path):
    t0 = time.perf_counter()
    md = read_csv(study("baseline.cfg", tmp_path, "mdfem", "study"))
    # The a priori single-level rule is cheap at the study tolerances, so its
    # curve is swept to tolerances whose costs cover the MDFEM range.
    sl = read_csv(study("baseline.cfg", tmp_path, "single", "baseline", "--set",
                        "run.epsilon=" + ",".join(f"2^-{k}" for k in range(4, 36, 4))))
    assert max(float(r["cost_units"]) for r in sl) >= max(float(r["cost_units"]) for r in md)
    sl_pts = [(float(r["cost_units"]), float(r["abs_error"])) for r in sl]
    md_pts = sorted(((float(r["epsilon"]), float(r["cost_units"]), float(r["abs_error"]))
                     for r in md))[:2]
    ok, parts = True, []
    for eps, cost, err in md_pts:
        # best single-level error achievable at no more than the MDFEM cost
        cheaper = [e for c, e in sl_pts if c <= cost]
        envelope = min(cheaper) if cheaper else math.inf
        ok &= err <= envelope
        parts.append(f"eps {eps:g}: MDFEM {err:.2e} @ {cost:.0f} vs single-level {envelope:.2e}")
    record(9, ok, "; ".join(parts), t0)


@pytest.mark.slow
def test_10_determinism(randomized_runs):
    t0 = time.perf_counter()
    first, tmp, _ = randomized_runs
    second = study("randomized.cfg", tmp, "t3", "study", "--seed", "0", "--threads", "3")
    same = first.read_bytes() == second.read_bytes()
    record(10, same, "study CSV byte-identical for threads 1 and 3", t0)
