"""Acceptance criteria, one test each, at the stated tolerances and time limits.

Every test prints a single ``criterion N: PASS|FAIL ...`` line (outside pytest's
output capture) before asserting.
"""

import math
import time

import numpy as np
import pytest

from regmdp.analysis import (
    check_performance_error, check_sandwich, max_bonus, operator_properties, read_sweep_csv,
    reference_optimum, regularized_optimum, sparsity, uniformity_gap,
)
from regmdp.cli import main as cli_main
from regmdp.mdp import grid_index, grid_orbits, gridworld, random_mdp
from regmdp.projection import brute_force_project, project, project_rows, softmax, sparsemax
from regmdp.regularizer import PRESET_NAMES, Shannon, Tsallis, f_prime, g, induces_sparsity, preset
from regmdp.solver import rpi, value_iterate

ALL = {name: preset(name) for name in PRESET_NAMES}
SPARSE = [n for n in PRESET_NAMES if induces_sparsity(ALL[n])]


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, elapsed, limit=None):
        timing = f"{elapsed:.1f}s" + (f" (limit {limit:g}s)" if limit else "")
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} - {detail} [{timing}]")
    return emit


@pytest.fixture(scope="module")
def default_random():
    return random_mdp(50, 10, 0.99, 0.95, seed=7)


def test_criterion_01_closed_forms(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = {"tsallis": 0.0, "shannon": 0.0}
    for lam in (0.01, 1.0, 100.0):
        for _ in range(1000):
            q = rng.normal(size=int(rng.integers(2, 51)))
            worst["tsallis"] = max(worst["tsallis"],
                                   np.max(np.abs(project(Tsallis(0.5, 2), q, lam).pi - sparsemax(q / lam)[0])))
            worst["shannon"] = max(worst["shannon"],
                                   np.max(np.abs(project(Shannon(), q, lam).pi - softmax(q / lam)[0])))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-8 and elapsed < 5
    report(1, ok, f"sup error tsallis {worst['tsallis']:.2e}, shannon {worst['shannon']:.2e} "
                  f"(1000 rows x 3 lambdas, tol 1e-8)", elapsed, 5)
    assert max(worst.values()) <= 1e-8
    assert elapsed < 5


def test_criterion_02_inverse_round_trip(report):
    t0 = time.perf_counter()
    x = np.geomspace(1e-6, 1 - 1e-6, 1000)
    errs = {}
    for name, spec in ALL.items():
        xs = x[[all(abs(xi - c) >= 1e-9 for c in spec.kinks) for xi in x]]
        errs[name] = float(np.max(np.abs(g(spec, f_prime(spec, xs)) - xs)))
    elapsed = time.perf_counter() - t0
    worst = max(errs, key=errs.get)
    ok = errs[worst] <= 1e-8 and elapsed < 1
    report(2, ok, f"worst |g(f'(x)) - x| = {errs[worst]:.2e} ({worst}), tol 1e-8", elapsed, 1)
    assert errs[worst] <= 1e-8
    assert elapsed < 1


def test_criterion_03_oracle_equivalence(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(103)
    worst = 0.0
    for spec in ALL.values():
        for _ in range(200):
            q = rng.uniform(-1, 1, int(rng.integers(2, 4)))
            lam = float(10 ** rng.uniform(-2, 2))
            worst = max(worst, np.max(np.abs(project(spec, q, lam).pi - brute_force_project(spec, q, lam))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-3 and elapsed < 60
    report(3, ok, f"max |project - grid oracle| = {worst:.2e} over 7 x 200 instances, tol 1e-3", elapsed, 60)
    assert worst < 1e-3
    assert elapsed < 60


def test_criterion_04_operator_properties(report):
    t0 = time.perf_counter()
    mdp = random_mdp(20, 5, 0.9, 0.5, seed=11)
    failures, worst = [], {}
    for name, spec in ALL.items():
        for lam in (0.01, 1.0):
            for prop in operator_properties(mdp, spec, lam, trials=100, seed=4, tol=1e-10, contraction_tol=1e-12):
                if prop.name == "sandwich":
                    continue
                worst[prop.name] = max(worst.get(prop.name, -math.inf), prop.worst_slack)
                if not prop.passed:
                    failures.append((name, lam, prop.name, prop.worst_slack))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 30
    slacks = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(4, ok, f"worst slacks: {slacks}; failures: {failures or 'none'}", elapsed, 30)
    assert not failures
    assert elapsed < 30


def test_criterion_05_sandwich(report, default_random):
    t0 = time.perf_counter()
    rng = np.random.default_rng(105)
    worst, bad = 0.0, 0
    for spec in ALL.values():
        for lam in (0.01, 1.0):
            for _ in range(100):
                chk = check_sandwich(default_random, spec, lam, rng.uniform(-10, 10, 50), slack=1e-10)
                worst = max(worst, chk.max_violation)
                bad += not (chk.lower_ok and chk.upper_ok)
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 30
    report(5, ok, f"{bad} violations in 1400 checks, worst slack {worst:.1e} (tol 1e-10)", elapsed, 30)
    assert bad == 0
    assert elapsed < 30


def test_criterion_06_performance_error(report, default_random):
    t0 = time.perf_counter()
    mdp = default_random
    v_star = reference_optimum(mdp, tol=1e-9).v_star
    failures, ratio = [], 0.0
    for name, spec in ALL.items():
        for lam in (0.01, 0.1, 1.0):
            chk = check_performance_error(mdp, spec, lam, tol=1e-9, v_star=v_star)
            bound = lam * float(spec._phi(np.float64(0.1))) / 0.01
            ratio = max(ratio, chk.err / bound)
            if not (chk.min_diff >= 0 and chk.err <= bound + 1e-6):
                failures.append((name, lam, chk.err, bound, chk.min_diff))
    tighter = all(max_bonus(Tsallis(0.5, 2), lam, 10) / 0.01 < math.log(10) * lam / 0.01
                  and max_bonus(Tsallis(0.5, 2), lam, 10) == pytest.approx(0.5 * 0.9 * lam)
                  for lam in (0.01, 0.1, 1.0))
    elapsed = time.perf_counter() - t0
    ok = not failures and tighter and elapsed < 120
    report(6, ok, f"0 <= V_lam - V* <= bound at 21 points (max err/bound {ratio:.3f}); "
                  f"tsallis bound < shannon bound: {tighter}; failures: {failures or 'none'}", elapsed, 120)
    assert not failures and tighter
    assert elapsed < 120


def test_criterion_07_no_sparsity_for_shannon_family(report, default_random):
    t0 = time.perf_counter()
    rows = []
    for name in ("shannon", "mix"):
        for lam in (0.01, 0.1, 1.0, 10.0):
            pi = regularized_optimum(default_random, ALL[name], lam).policy
            rows.append((name, lam, float(pi.min()), sparsity(pi, 1e-9)))
    elapsed = time.perf_counter() - t0
    positive = all(m > 0 for _, _, m, _ in rows)
    full = [(n, lam, m, d) for n, lam, m, d in rows if d != 1.0]
    ok = positive and not full and elapsed < 60
    detail = ", ".join(f"{n}@{lam:g}: delta={d:.3f}, min pi={m:.1e}" for n, lam, m, d in full)
    report(7, ok, f"all entries > 0: {positive}; delta < 1 at: {detail or 'none'}", elapsed, 60)
    assert positive
    assert not full, "entries below the 1e-9 sparsity threshold (exact values, see min pi)"
    assert elapsed < 60


def test_criterion_08_sparsity_endpoints(report, default_random):
    t0 = time.perf_counter()
    mdp = default_random
    q_star = reference_optimum(mdp, tol=1e-9).q_star
    top2 = -np.sort(-q_star, axis=1)[:, :2]
    unique = bool(np.all(top2[:, 0] > top2[:, 1]))
    failures = []
    for name in SPARSE:
        pi = value_iterate(mdp, ALL[name], 1e-6, tol=1e-9).policy
        if sparsity(pi) != 1 / mdp.n_actions:
            failures.append((name, 1e-6, "delta", sparsity(pi)))
    for name, spec in ALL.items():
        pi = rpi(mdp, spec, 1e6, tol=1e-9).policy
        if not (uniformity_gap(pi) < 1e-3 and sparsity(pi) == 1.0):
            failures.append((name, 1e6, "gap/delta", uniformity_gap(pi), sparsity(pi)))
    elapsed = time.perf_counter() - t0
    ok = unique and not failures and elapsed < 120
    report(8, ok, f"unique argmax: {unique} (min top-2 gap {np.min(top2[:, 0] - top2[:, 1]):.2e}); "
                  f"failures: {failures or 'none'}", elapsed, 120)
    assert unique and not failures
    assert elapsed < 120


@pytest.fixture(scope="module")
def cross_validation():
    """VI (tol 1e-9) and RPI on both default environments; shared by criteria 9 and 10."""
    t0 = time.perf_counter()
    runs = []
    for env, mdp in (("random", random_mdp(50, 10, 0.99, 0.95, seed=7)), ("gridworld", gridworld(5, 0.99))):
        for name, spec in ALL.items():
            for lam in (0.01, 0.1, 1.0, 10.0):
                vi = value_iterate(mdp, spec, lam, tol=1e-9)
                pi = rpi(mdp, spec, lam, tol=1e-9, max_iter=500)
                runs.append({"env": env, "reg": name, "lam": lam,
                             "diff": float(np.max(np.abs(vi.v_star - pi.v_star))),
                             "min_improvement": min(pi.diagnostics["improvements"]),
                             "value_gap": max(vi.diagnostics["value_gap"], pi.diagnostics["value_gap"])})
    return runs, time.perf_counter() - t0


def test_criterion_09_solver_agreement(report, cross_validation):
    runs, elapsed = cross_validation
    diff = max(r["diff"] for r in runs)
    imp = min(r["min_improvement"] for r in runs)
    ok = diff <= 1e-6 and imp >= -1e-10 and elapsed < 300
    report(9, ok, f"{len(runs)} runs: max |V_vi - V_rpi| = {diff:.2e} (tol 1e-6), "
                  f"min RPI Q-improvement {imp:.1e} (>= -1e-10)", elapsed, 300)
    assert diff <= 1e-6 and imp >= -1e-10
    assert elapsed < 300


def test_criterion_10_value_formulas(report, cross_validation):
    runs, _ = cross_validation
    gap = max(r["value_gap"] for r in runs)
    report(10, gap <= 1e-9, f"max disagreement of the two value formulas {gap:.1e} over every projection "
                            f"in {len(runs)} runs (tol 1e-9)", 0.0)
    assert gap <= 1e-9


def test_criterion_11_gridworld_symmetry(report):
    t0 = time.perf_counter()
    N = 5
    mdp = gridworld(N, 0.99)
    orbits = grid_orbits(N)
    centre = grid_index(N, 0, 0)
    worst_uniform, worst_orbit = 0.0, 0.0
    for spec in ALL.values():
        for lam in (0.1, 1.0):
            sol = rpi(mdp, spec, lam, tol=1e-10)
            worst_uniform = max(worst_uniform, float(np.max(np.abs(sol.policy[centre] - 0.25))))
            worst_orbit = max(worst_orbit, max(float(np.ptp(sol.v_star[o])) for o in orbits))
    elapsed = time.perf_counter() - t0
    ok = worst_uniform <= 1e-6 and worst_orbit <= 1e-8 and elapsed < 30
    report(11, ok, f"centre policy off uniform by {worst_uniform:.1e} (tol 1e-6), "
                   f"orbit spread {worst_orbit:.1e} (tol 1e-8)", elapsed, 30)
    assert worst_uniform <= 1e-6 and worst_orbit <= 1e-8
    assert elapsed < 30


def test_criterion_12_sweep_shape(report, tmp_path):
    t0 = time.perf_counter()
    out = str(tmp_path / "sweep_{reg}.csv")
    assert cli_main(["sweep", "--env", "random", "--lambdas", "logspace(1e-3,1e3,61)", "--out", out]) == 0
    elapsed = time.perf_counter() - t0
    A = 10
    problems = []
    for name in PRESET_NAMES:
        rows = read_sweep_csv(out.replace("{reg}", name))
        assert len(rows) == 61 and all(r["status"] == "ok" for r in rows)
        start = 1 / A if name in SPARSE else 1.0
        if rows[0]["delta"] != start:
            problems.append(f"{name} starts at delta={rows[0]['delta']:.3f} (want {start:g})")
        if rows[-1]["delta"] != 1.0:
            problems.append(f"{name} ends at delta={rows[-1]['delta']:.3f}")
        gap = max(abs(rows[-1][f"p{a}"] - 1 / A) for a in range(A))
        if not gap < 1e-3:
            problems.append(f"{name} probe gap {gap:.1e} at lambda=1e3")
    ok = not problems and elapsed < 600
    report(12, ok, "; ".join(problems) or "all seven curves have the expected endpoints", elapsed, 600)
    assert not problems
    assert elapsed < 600
