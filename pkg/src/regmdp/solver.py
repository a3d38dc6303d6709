"""Regularized Bellman operator, value iteration, regularized policy iteration.

lam = 0 always means the plain MDP: the row max replaces the projection and
the greedy policy breaks ties towards the lowest action index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._files import atomic_write_text
from .mdp import ConvergenceError, TabularMdp, evaluate_policy_exact, q_from_v
from .projection import ProjectionResult, project_rows
from .regularizer import Regularizer

VI_TOL = 1e-8
VI_MAX_ITER = 100_000
RPI_MAX_ITER = 500
MONOTONE_FAIL = 1e-8  # a Q decrease beyond this during RPI is treated as a bug
FORMAT = "regmdp-solution"


class MonotonicityError(RuntimeError):
    pass


@dataclass
class Solution:
    """Fixed point of T_lam with its greedy/regularized policy.

    ``diagnostics`` holds per-iteration traces: ``residuals`` for VI, and
    for RPI also ``improvements`` (min over (s, a) of Q_{i+1} - Q_i) and
    ``policy_changes``; ``value_gap`` is the worst disagreement between the
    two value formulas over every projection performed.
    """

    v_star: np.ndarray
    q_star: np.ndarray
    policy: np.ndarray
    mu: np.ndarray
    iterations: int
    final_residual: float
    solver: str = "vi"
    lam: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def _greedy(q):
    # np.argmax returns the first maximiser: lowest-index tie-breaking
    pi = np.zeros_like(q)
    pi[np.arange(q.shape[0]), np.argmax(q, axis=1)] = 1.0
    return pi


def _check_gamma(mdp):
    if not 0.0 <= mdp.gamma < 1.0:
        raise ValueError(f"discount out of range: gamma={mdp.gamma!r}; solvers need 0 <= gamma < 1")


def _check_lam(spec, lam):
    if not (lam >= 0 and math.isfinite(lam)):
        raise ValueError(f"lambda must be finite and >= 0, got {lam}")
    if lam > 0 and not isinstance(spec, Regularizer):
        raise ValueError("a regularizer is required when lambda > 0")


def backup(mdp: TabularMdp, spec, lam, v, mu0=None):
    """One application of T_lam; returns (Q, ProjectionResult for every row)."""
    _check_lam(spec, lam)
    q = q_from_v(mdp, spec, lam, v)
    if lam == 0:
        vmax = q.max(axis=1)
        return q, ProjectionResult(pi=_greedy(q), mu=vmax, value=vmax,
                                   support_size=np.ones(q.shape[0], dtype=int))
    return q, project_rows(spec, q, lam, mu0=mu0)


def bellman_operator(mdp: TabularMdp, spec, lam, v, return_policy: bool = False):
    """(T_lam v)(s) = max over the simplex of sum_a pi (Q(s, a) + lam phi(pi))."""
    _, res = backup(mdp, spec, lam, v)
    return (res.value, res.pi) if return_policy else res.value


def _assemble(mdp, spec, lam, v, iterations, residual, solver, diagnostics):
    q, res = backup(mdp, spec, lam, v)
    diagnostics["value_gap"] = max(diagnostics.get("value_gap", 0.0), res.value_gap)
    return Solution(v_star=np.asarray(v, dtype=float), q_star=q, policy=res.pi, mu=np.asarray(res.mu),
                    iterations=iterations, final_residual=float(residual), solver=solver,
                    lam=float(lam), diagnostics=diagnostics)


def value_iterate(mdp: TabularMdp, spec, lam, tol: float = VI_TOL, max_iter: int = VI_MAX_ITER,
                  v0=None) -> Solution:
    """Iterate V <- T_lam V from V = 0 until the sup-norm update is below ``tol``.

    The returned V is within tol * gamma / (1 - gamma) of the fixed point.
    Multipliers from the previous sweep warm-start the projections.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    _check_lam(spec, lam)
    _check_gamma(mdp)
    v = np.zeros(mdp.n_states) if v0 is None else np.array(v0, dtype=float)
    residuals = []
    gap = 0.0
    mu = None
    for it in range(1, max_iter + 1):
        _, res = backup(mdp, spec, lam, v, mu0=mu)
        mu = res.mu
        gap = max(gap, res.value_gap)
        r = float(np.max(np.abs(res.value - v)))
        residuals.append(r)
        v = res.value
        if r < tol:
            return _assemble(mdp, spec, lam, v, it, r, "vi", {"residuals": residuals, "value_gap": gap})
    raise ConvergenceError(f"value iteration did not converge in {max_iter} iterations "
                           f"(last residual {residuals[-1]:.3g})", max_iter, residuals[-1])


def solve_unregularized(mdp: TabularMdp, tol: float = VI_TOL, max_iter: int = VI_MAX_ITER) -> Solution:
    """Plain value iteration; greedy policy with lowest-index ties."""
    return value_iterate(mdp, None, 0.0, tol, max_iter)


def rpi(mdp: TabularMdp, spec, lam, tol: float = VI_TOL, max_iter: int = RPI_MAX_ITER,
        policy0=None) -> Solution:
    """Regularized policy iteration: exact evaluation, then per-state projection.

    Starts from the uniform policy (or ``policy0``). Stops when the policy
    moves by less than ``tol`` or Q changes by less than ``tol`` in sup-norm.
    Q must not decrease between iterations; a drop larger than 1e-8 raises
    MonotonicityError.
    """
    if not lam > 0:
        raise ValueError("rpi needs lambda > 0; use solve_unregularized for lambda = 0")
    if not tol > 0:
        raise ValueError("tol must be positive")
    _check_lam(spec, lam)
    _check_gamma(mdp)
    S, A = mdp.n_states, mdp.n_actions
    pi = np.full((S, A), 1.0 / A) if policy0 is None else np.array(policy0, dtype=float)
    v, q = evaluate_policy_exact(mdp, spec, lam, pi)
    diag = {"residuals": [], "improvements": [], "policy_changes": [], "value_gap": 0.0}
    mu = None
    for it in range(1, max_iter + 1):
        res = project_rows(spec, q, lam, mu0=mu)
        mu = res.mu
        diag["value_gap"] = max(diag["value_gap"], res.value_gap)
        v_new, q_new = evaluate_policy_exact(mdp, spec, lam, res.pi)
        improvement = float(np.min(q_new - q))
        change = float(np.max(np.abs(res.pi - pi)))
        dq = float(np.max(np.abs(q_new - q)))
        diag["improvements"].append(improvement)
        diag["policy_changes"].append(change)
        diag["residuals"].append(dq)
        if improvement < -MONOTONE_FAIL * max(1.0, float(np.max(np.abs(q)))):
            raise MonotonicityError(f"Q decreased by {-improvement:.3g} at RPI iteration {it}")
        pi, v, q = res.pi, v_new, q_new
        if change < tol or dq < tol:
            return _assemble(mdp, spec, lam, v, it, dq, "rpi", diag)
    raise ConvergenceError(f"RPI did not converge in {max_iter} iterations "
                           f"(last Q change {diag['residuals'][-1]:.3g})", max_iter, diag["residuals"][-1])


def policy_iteration(mdp: TabularMdp, policy0=None, max_iter: int = 10_000) -> Solution:
    """Howard policy iteration for lam = 0 (exact evaluation, greedy improvement).

    Used to polish the unregularized reference V*; switches only on strict
    improvement so it terminates.
    """
    _check_gamma(mdp)
    S, A = mdp.n_states, mdp.n_actions
    pi = _greedy(np.zeros((S, A))) if policy0 is None else np.array(policy0, dtype=float)
    for it in range(1, max_iter + 1):
        v, q = evaluate_policy_exact(mdp, None, 0.0, pi)
        current = np.sum(pi * q, axis=1)
        best = q.max(axis=1)
        scale = 1e-12 * max(1.0, float(np.max(np.abs(q))))
        switch = best > current + scale
        if not np.any(switch):
            return _assemble(mdp, None, 0.0, v, it, 0.0, "pi", {})
        new = _greedy(q)
        pi = np.where(switch[:, None], new, pi)
    raise ConvergenceError(f"policy iteration did not converge in {max_iter} iterations", max_iter)


def solve(mdp: TabularMdp, spec, lam, method: str = "vi", tol: float = VI_TOL, max_iter=None) -> Solution:
    """Dispatch on ``method`` ('vi' or 'rpi'); lam = 0 always uses plain VI."""
    if lam == 0:
        return solve_unregularized(mdp, tol, max_iter or VI_MAX_ITER)
    if method == "vi":
        return value_iterate(mdp, spec, lam, tol, max_iter or VI_MAX_ITER)
    if method == "rpi":
        return rpi(mdp, spec, lam, tol, max_iter or RPI_MAX_ITER)
    raise ValueError(f"unknown method {method!r} (expected 'vi' or 'rpi')")


# -- files ------------------------------------------------------------------

def solution_to_dict(sol: Solution, reg_string: str | None, tol: float, mdp_hash: str | None,
                     extra: dict | None = None) -> dict:
    d = {
        "format": FORMAT,
        "version": 1,
        "solver": sol.solver,
        "regularizer": reg_string,
        "lambda": sol.lam,
        "tol": tol,
        "iterations": sol.iterations,
        "final_residual": sol.final_residual,
        "n_states": int(sol.q_star.shape[0]),
        "n_actions": int(sol.q_star.shape[1]),
        "v_star": sol.v_star.tolist(),
        "q_star": sol.q_star.tolist(),
        "policy": sol.policy.tolist(),
        "mu": np.asarray(sol.mu).tolist(),
        "mdp_sha256": mdp_hash,
        "package_version": __version__,
    }
    if extra:
        d["provenance"] = extra
    return d


def solution_from_dict(d: dict) -> Solution:
    if d.get("format") != FORMAT:
        raise ValueError(f"not a solution file (format={d.get('format')!r})")
    return Solution(v_star=np.array(d["v_star"]), q_star=np.array(d["q_star"]),
                    policy=np.array(d["policy"]), mu=np.array(d["mu"]),
                    iterations=int(d["iterations"]), final_residual=float(d["final_residual"]),
                    solver=d["solver"], lam=float(d["lambda"]))


def save_solution(sol: Solution, path, reg_string, tol, mdp_hash=None, extra=None):
    text = json.dumps(solution_to_dict(sol, reg_string, tol, mdp_hash, extra), indent=1) + "\n"
    atomic_write_text(path, text)


def load_solution(path) -> Solution:
    with open(path, encoding="utf-8") as fh:
        return solution_from_dict(json.load(fh))
