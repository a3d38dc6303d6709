"""Sparsity measures, bound checks and lambda sweeps."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._files import atomic_write_text
from .mdp import TabularMdp, evaluate_policy_exact, probe_states
from .regularizer import Regularizer
from .solver import Solution, bellman_operator, policy_iteration, rpi, solve, solve_unregularized, value_iterate

SPARSITY_EPS = 1e-9
SANDWICH_SLACK = 1e-10


def sparsity(policy, epsilon: float = SPARSITY_EPS) -> float:
    """Fraction of (s, a) pairs with pi(a|s) > epsilon."""
    pi = np.asarray(policy, dtype=float)
    if not 0 <= epsilon < 1.0 / pi.shape[1]:
        raise ValueError(f"epsilon must be in [0, 1/|A|), got {epsilon}")
    return float(np.count_nonzero(pi > epsilon)) / pi.size


def uniformity_gap(policy) -> float:
    pi = np.asarray(policy, dtype=float)
    return float(np.max(np.abs(pi - 1.0 / pi.shape[1])))


def support_histogram(policy, epsilon: float = SPARSITY_EPS) -> list[int]:
    """counts[k] = number of states whose policy has exactly k actions above epsilon."""
    pi = np.asarray(policy, dtype=float)
    sizes = np.count_nonzero(pi > epsilon, axis=1)
    return np.bincount(sizes, minlength=pi.shape[1] + 1).tolist()


def max_bonus(spec: Regularizer | None, lam, n_actions: int) -> float:
    """lam * phi(1/|A|): the largest possible per-step bonus."""
    if lam == 0:
        return 0.0
    return float(lam * spec._phi(np.float64(1.0 / n_actions)))


class SandwichCheck(NamedTuple):
    lower_ok: bool
    upper_ok: bool
    max_violation: float


def check_sandwich(mdp: TabularMdp, spec, lam, v, slack: float = SANDWICH_SLACK) -> SandwichCheck:
    """T v <= T_lam v <= T v + lam phi(1/|A|), entrywise up to ``slack``."""
    tv = bellman_operator(mdp, None, 0.0, v)
    tlv = bellman_operator(mdp, spec, lam, v)
    low = float(np.max(tv - tlv))
    up = float(np.max(tlv - tv - max_bonus(spec, lam, mdp.n_actions)))
    return SandwichCheck(low <= slack, up <= slack, max(low, up, 0.0))


def reference_optimum(mdp: TabularMdp, tol: float = 1e-9) -> Solution:
    """V* from value iteration, polished by exact policy iteration."""
    vi = solve_unregularized(mdp, tol)
    return policy_iteration(mdp, policy0=vi.policy)


def regularized_optimum(mdp: TabularMdp, spec, lam, tol: float = 1e-9) -> Solution:
    """V_lam* from value iteration, polished by RPI started at the VI policy."""
    if lam == 0:
        return reference_optimum(mdp, tol)
    vi = value_iterate(mdp, spec, lam, tol)
    return rpi(mdp, spec, lam, tol, policy0=vi.policy)


class PropertyResult(NamedTuple):
    name: str
    trials: int
    worst_slack: float  # largest violation seen; <= 0 means satisfied with room
    passed: bool


def operator_properties(mdp: TabularMdp, spec, lam, trials: int = 100, seed: int = 0,
                        gamma_ref: float | None = None, scale: float = 10.0,
                        tol: float = SANDWICH_SLACK, contraction_tol: float = 1e-12) -> list[PropertyResult]:
    """Randomised checks of contraction, monotonicity, translation and the sandwich bound.

    Value functions are drawn uniformly from [-scale, scale]. Contraction is
    tested against ``gamma_ref`` (default: the MDP's own discount) on random
    pairs and on constant shifts V + c, the pairs for which it is tight.
    Slacks are ``lhs - rhs``; a property passes when every slack is <= its
    tolerance.
    """
    rng = np.random.default_rng(seed)
    S = mdp.n_states
    gamma = mdp.gamma if gamma_ref is None else gamma_ref
    T = lambda v: bellman_operator(mdp, spec, lam, v)
    bonus = max_bonus(spec, lam, mdp.n_actions)
    worst = {"contraction": -math.inf, "monotonicity": -math.inf, "translation": -math.inf,
             "sandwich": -math.inf}
    for i in range(trials):
        v1 = rng.uniform(-scale, scale, S)
        if i % 2:
            v2 = v1 + rng.uniform(-scale, scale)
        else:
            v2 = rng.uniform(-scale, scale, S)
        t1, t2 = T(v1), T(v2)
        worst["contraction"] = max(worst["contraction"],
                                   float(np.max(np.abs(t1 - t2)) - gamma * np.max(np.abs(v1 - v2))))
        hi = v1 + rng.uniform(0, scale, S)
        worst["monotonicity"] = max(worst["monotonicity"], float(np.max(t1 - T(hi))))
        c = rng.uniform(-scale, scale)
        worst["translation"] = max(worst["translation"], float(np.max(np.abs(T(v1 + c) - t1 - gamma * c))))
        t0 = bellman_operator(mdp, None, 0.0, v1)
        worst["sandwich"] = max(worst["sandwich"], float(np.max(t0 - t1)), float(np.max(t1 - t0 - bonus)))
    out = []
    for name, w in worst.items():
        limit = contraction_tol if name == "contraction" else tol
        out.append(PropertyResult(name, trials, w, bool(w <= limit)))
    return out


class PerformanceCheck(NamedTuple):
    err: float
    bound: float
    passed: bool
    min_diff: float  # min over states of V_lam* - V*; must be >= 0


def check_performance_error(mdp: TabularMdp, spec, lam, tol: float = 1e-9,
                            v_star=None) -> PerformanceCheck:
    """0 <= V_lam* - V* <= lam phi(1/|A|) / (1 - gamma), up to 10 tol on the upper side."""
    if v_star is None:
        v_star = reference_optimum(mdp, tol).v_star
    v_lam = regularized_optimum(mdp, spec, lam, tol).v_star
    diff = v_lam - v_star
    err = float(np.max(np.abs(diff)))
    bound = max_bonus(spec, lam, mdp.n_actions) / (1.0 - mdp.gamma)
    min_diff = float(np.min(diff))
    return PerformanceCheck(err, bound, bool(min_diff >= 0 and err <= bound + 10 * tol), min_diff)


def policy_suboptimality(mdp: TabularMdp, solution: Solution, v_star=None) -> float:
    """||V* - V^pi||_inf with pi = solution.policy evaluated without the bonus."""
    if v_star is None:
        v_star = reference_optimum(mdp).v_star
    v_pi, _ = evaluate_policy_exact(mdp, None, 0.0, solution.policy)
    return float(np.max(np.abs(v_star - v_pi)))


# -- sweeps -----------------------------------------------------------------

@dataclass
class SweepRecord:
    lam: float
    delta: float = math.nan
    uniformity_gap: float = math.nan
    err_thm5: float = math.nan
    bound_thm5: float = math.nan
    policy_subopt: float = math.nan
    iterations: int = 0
    support_histogram: list = field(default_factory=list)
    probe: dict = field(default_factory=dict)  # state -> action probabilities
    status: str = "ok"
    min_diff: float = math.nan  # min_s V_lam*(s) - V*(s)


def thread_count(threads: int | None = None) -> int:
    """Worker count: explicit argument, else REGMDP_THREADS, 0 meaning one per CPU."""
    if threads is None:
        threads = int(os.environ.get("REGMDP_THREADS", "0") or 0)
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


def _sweep_point(mdp, spec, lam, method, tol, v_star, probes):
    rec = SweepRecord(lam=float(lam))
    try:
        sol = solve(mdp, spec, lam, method, tol)
    except Exception as exc:  # recorded, the sweep carries on
        rec.status = f"error: {type(exc).__name__}: {exc}"
        return rec
    diff = sol.v_star - v_star
    rec.delta = sparsity(sol.policy)
    rec.uniformity_gap = uniformity_gap(sol.policy)
    rec.err_thm5 = float(np.max(np.abs(diff)))
    rec.min_diff = float(np.min(diff))
    rec.bound_thm5 = max_bonus(spec, lam, mdp.n_actions) / (1.0 - mdp.gamma)
    rec.policy_subopt = policy_suboptimality(mdp, sol, v_star)
    rec.iterations = sol.iterations
    rec.support_histogram = support_histogram(sol.policy)
    rec.probe = {int(s): sol.policy[s].copy() for s in probes}
    return rec


def lambda_sweep(mdp: TabularMdp, spec, lambdas, method: str = "rpi", tol: float = 1e-9,
                 probes=None, threads: int | None = None) -> list[SweepRecord]:
    """Solve at every lambda and record sparsity, the error against V* with its bound, and probe-state rows.

    Failures at individual lambdas are recorded in ``status``. Output order
    follows ``lambdas`` whatever the execution order.
    """
    lambdas = [float(x) for x in lambdas]
    if not lambdas:
        raise ValueError("empty lambda list")
    if any(x <= 0 for x in lambdas) or any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambdas must be positive and strictly increasing")
    probes = probe_states(mdp) if probes is None else list(probes)
    v_star = reference_optimum(mdp, tol).v_star
    work = lambda lam: _sweep_point(mdp, spec, lam, method, tol, v_star, probes)
    n = min(thread_count(threads), len(lambdas))
    if n <= 1:
        return [work(lam) for lam in lambdas]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(work, lambdas))


CSV_HEADER = ["lambda", "delta", "uniformity_gap", "err_thm5", "bound_thm5", "policy_subopt", "iterations"]


def sweep_csv(records: list[SweepRecord], n_actions: int, probe: int | None = None) -> str:
    """CSV text; probability columns p0..p{A-1} are for ``probe`` (default: first probe state),
    followed by a status column."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER + [f"p{a}" for a in range(n_actions)] + ["status"])
    for r in records:
        key = probe if probe is not None else (next(iter(r.probe)) if r.probe else None)
        row = r.probe.get(key) if key is not None else None
        probs = [repr(float(p)) for p in row] if row is not None else ["nan"] * n_actions
        w.writerow([repr(r.lam), repr(r.delta), repr(r.uniformity_gap), repr(r.err_thm5),
                    repr(r.bound_thm5), repr(r.policy_subopt), r.iterations] + probs + [r.status])
    return buf.getvalue()


def write_sweep_csv(records, path, n_actions: int, probe: int | None = None):
    atomic_write_text(path, sweep_csv(records, n_actions, probe))


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for k, v in row.items():
            if k != "status":
                row[k] = float(v)
    return rows
