"""Tabular MDPs: container, validation, the two test environments, policy evaluation.

Arrays follow the usual layout: ``transition[s, a, s']``, ``reward[s, a]``,
policies and Q-functions are (S, A), value functions length S.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._files import atomic_write_text, sha256_file
from .regularizer import Regularizer

ROW_TOL = 1e-12  # transition rows must sum to 1 within this
POLICY_TOL = 1e-10
FORMAT = "regmdp-mdp"

# gridworld actions, as (d_row, d_col)
ACTIONS = {"left": (0, -1), "right": (0, 1), "up": (-1, 0), "down": (1, 0)}


class ConvergenceError(RuntimeError):
    """An iterative method hit max_iter; carries the last residual."""

    def __init__(self, message, iterations=0, residual=math.nan):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """(S, A, P, r, P0, gamma) with arrays stored read-only.

    Construction does not validate; call :func:`validate` (loaders and
    generators do).
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    initial: np.ndarray
    r_max: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "reward", _frozen(self.reward))
        object.__setattr__(self, "initial", _frozen(self.initial))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "r_max", float(self.r_max))

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    def replace(self, **changes) -> "TabularMdp":
        kw = dict(transition=self.transition, reward=self.reward, gamma=self.gamma,
                  initial=self.initial, r_max=self.r_max, meta=dict(self.meta))
        kw.update(changes)
        return TabularMdp(**kw)

    def __eq__(self, other):
        if not isinstance(other, TabularMdp):
            return NotImplemented
        return (self.gamma == other.gamma and self.r_max == other.r_max
                and np.array_equal(self.transition, other.transition)
                and np.array_equal(self.reward, other.reward)
                and np.array_equal(self.initial, other.initial))

    __hash__ = None


def validate(mdp: TabularMdp) -> list[str]:
    """Return a list of violated invariants (empty when the MDP is well formed)."""
    out = []
    P, r = mdp.transition, mdp.reward
    if r.ndim != 2:
        return [f"reward must be S x A, got shape {r.shape}"]
    S, A = r.shape
    if S < 1 or A < 1:
        out.append("need at least one state and one action")
    if P.shape != (S, A, S):
        return out + [f"transition must have shape {(S, A, S)}, got {P.shape}"]
    if mdp.initial.shape != (S,):
        out.append(f"initial must have length {S}")
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(r))):
        out.append("non-finite entries")
        return out
    for s, a in zip(*np.nonzero(P.min(axis=2) < 0)):
        out.append(f"negative transition probability at (s={s}, a={a})")
    sums = P.sum(axis=2)
    for s, a in zip(*np.nonzero(np.abs(sums - 1.0) > ROW_TOL)):
        out.append(f"transition row (s={s}, a={a}) sums to {sums[s, a]!r}")
    if not (0.0 <= mdp.gamma < 1.0):
        out.append(f"discount out of range: gamma={mdp.gamma!r}")
    if np.any(r < 0) or np.any(r > mdp.r_max):
        out.append(f"rewards outside [0, r_max={mdp.r_max!r}]")
    if mdp.initial.shape == (S,):
        if np.any(mdp.initial < 0) or abs(mdp.initial.sum() - 1.0) > ROW_TOL:
            out.append("initial distribution is not a probability vector")
    return out


def check(mdp: TabularMdp) -> TabularMdp:
    problems = validate(mdp)
    if problems:
        raise ValueError("invalid MDP: " + "; ".join(problems[:5]))
    return mdp


# -- environments -----------------------------------------------------------

def random_mdp(n_states: int, n_actions: int, gamma: float, clip_prob: float, seed: int) -> TabularMdp:
    """Sparse random MDP: uniform transition weights, each zeroed with prob ``clip_prob``.

    Rows that lose every entry are redrawn until one survives. Rewards are
    uniform on [0, 1]. Fully determined by ``seed``.
    """
    if n_states < 1 or n_actions < 1:
        raise ValueError("n_states and n_actions must be >= 1")
    if not 0.0 <= clip_prob < 1.0:
        raise ValueError("clip_prob must be in [0, 1)")
    rng = np.random.default_rng(seed)
    P = rng.uniform(size=(n_states, n_actions, n_states))
    P[rng.uniform(size=P.shape) < clip_prob] = 0.0
    empty = np.argwhere(P.sum(axis=2) == 0)
    while len(empty):
        for s, a in empty:
            row = rng.uniform(size=n_states)
            row[rng.uniform(size=n_states) < clip_prob] = 0.0
            P[s, a] = row
        empty = np.argwhere(P.sum(axis=2) == 0)
    P /= P.sum(axis=2, keepdims=True)
    r = rng.uniform(size=(n_states, n_actions))
    init = np.full(n_states, 1.0 / n_states)
    meta = {"generator": "random", "n_states": n_states, "n_actions": n_actions,
            "gamma": gamma, "clip_prob": clip_prob, "seed": seed}
    return check(TabularMdp(P, r, gamma, init, r_max=1.0, meta=meta))


def grid_index(N: int, x: int, y: int) -> int:
    """State index of cell (x, y), both coordinates in [-(N-1), N-1]."""
    return (x + N - 1) * (2 * N - 1) + (y + N - 1)


def grid_coords(N: int, s: int) -> tuple[int, int]:
    side = 2 * N - 1
    return s // side - (N - 1), s % side - (N - 1)


def grid_orbits(N: int) -> list[list[int]]:
    """State indices grouped by the 8 symmetries of the square (rotations, reflections)."""
    seen, orbits = set(), []
    for s in range((2 * N - 1) ** 2):
        if s in seen:
            continue
        x, y = grid_coords(N, s)
        images = {(x, y), (-x, y), (x, -y), (-x, -y), (y, x), (-y, x), (y, -x), (-y, -x)}
        orbit = sorted(grid_index(N, i, j) for i, j in images)
        seen.update(orbit)
        orbits.append(orbit)
    return orbits


def gridworld(N: int, gamma: float = 0.99) -> TabularMdp:
    """(2N-1) x (2N-1) grid; reward 1 on stepping into a corner, corners absorbing.

    Actions are left/right/up/down (in that order, moving the column or row
    coordinate); moving into a wall leaves the agent in place. The start
    state is the centre (0, 0).
    """
    if int(N) != N or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N}")
    N = int(N)
    side = 2 * N - 1
    S, A = side * side, len(ACTIONS)
    P = np.zeros((S, A, S))
    r = np.zeros((S, A))
    edge = N - 1
    for s in range(S):
        x, y = grid_coords(N, s)
        if abs(x) == edge and abs(y) == edge:
            P[s, :, s] = 1.0
            continue
        for a, (dx, dy) in enumerate(ACTIONS.values()):
            nx, ny = x + dx, y + dy
            if abs(nx) > edge or abs(ny) > edge:
                nx, ny = x, y
            P[s, a, grid_index(N, nx, ny)] = 1.0
            if abs(nx) == edge and abs(ny) == edge:
                r[s, a] = 1.0
    init = np.zeros(S)
    init[grid_index(N, 0, 0)] = 1.0
    meta = {"generator": "gridworld", "N": N, "gamma": gamma}
    return check(TabularMdp(P, r, gamma, init, r_max=1.0, meta=meta))


def probe_states(mdp: TabularMdp) -> list[int]:
    """States whose action probabilities are tracked in sweeps."""
    if mdp.meta.get("generator") == "gridworld":
        N = int(mdp.meta["N"])
        c = math.ceil(N / 2)
        return [grid_index(N, 0, 0), grid_index(N, 0, c), grid_index(N, c, c)]
    return [0]


# -- evaluation -------------------------------------------------------------

def expected_bonus(spec: Regularizer | None, policy) -> np.ndarray:
    """Per-state sum_a pi phi(pi), with 0 * phi(0) = 0."""
    pi = np.asarray(policy, dtype=float)
    if spec is None:
        return np.zeros(pi.shape[0])
    pos = pi > 0
    with np.errstate(all="ignore"):
        vals = np.where(pos, pi * spec._phi(np.where(pos, pi, 1.0)), 0.0)
    return vals.sum(axis=1)


def _check_policy(mdp, policy):
    pi = np.asarray(policy, dtype=float)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy shape {pi.shape} != {(mdp.n_states, mdp.n_actions)}")
    if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1.0) > POLICY_TOL):
        raise ValueError("policy rows must be probability vectors")
    return pi


def q_from_v(mdp: TabularMdp, spec, lam, v) -> np.ndarray:
    """Q(s, a) = r(s, a) + gamma sum_s' P(s'|s, a) v(s').

    ``spec`` and ``lam`` do not enter (the bonus is already inside ``v``);
    they are accepted so every evaluation helper shares one calling convention.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (mdp.n_states,):
        raise ValueError(f"v must have length {mdp.n_states}, got shape {v.shape}")
    return mdp.reward + mdp.gamma * (mdp.transition @ v)


def v_from_q_policy(spec, lam, q, policy) -> np.ndarray:
    """V(s) = sum_a pi(a|s) [Q(s, a) + lam phi(pi(a|s))]."""
    q = np.asarray(q, dtype=float)
    pi = np.asarray(policy, dtype=float)
    if q.shape != pi.shape:
        raise ValueError(f"shape mismatch: q {q.shape} vs policy {pi.shape}")
    v = np.sum(pi * q, axis=1)
    if lam:
        v = v + lam * expected_bonus(spec, pi)
    return v


def policy_matrices(mdp: TabularMdp, spec, lam, policy):
    """(P^pi, r_lam^pi) for a stationary policy; the bonus is part of the reward."""
    pi = _check_policy(mdp, policy)
    P_pi = np.einsum("sa,sat->st", pi, mdp.transition)
    r_pi = np.sum(pi * mdp.reward, axis=1)
    if lam:
        r_pi = r_pi + lam * expected_bonus(spec, pi)
    return P_pi, r_pi


def evaluate_policy_exact(mdp: TabularMdp, spec, lam, policy):
    """Solve (I - gamma P^pi) V = r_lam^pi by LU; returns (V, Q).

    One step of iterative refinement is applied, which brings the residual
    down to rounding level even when V is large (big lambda, gamma near 1).
    """
    P_pi, r_pi = policy_matrices(mdp, spec, lam, policy)
    M = np.eye(mdp.n_states) - mdp.gamma * P_pi
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            lu = scipy.linalg.lu_factor(M, check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError) as exc:
            raise RuntimeError(f"policy evaluation system is singular: {exc}") from exc
    v = scipy.linalg.lu_solve(lu, r_pi, check_finite=False)
    v = v + scipy.linalg.lu_solve(lu, r_pi - M @ v, check_finite=False)
    return v, q_from_v(mdp, spec, lam, v)


def evaluate_policy_iterative(mdp: TabularMdp, spec, lam, policy, tol=1e-8, max_iter=100_000,
                              deltas: list | None = None) -> np.ndarray:
    """Iterate Q <- r + gamma P V(Q) from Q = 0 until the sup change is below ``tol``.

    If ``deltas`` is a list, the sup-norm change of every sweep is appended.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    pi = _check_policy(mdp, policy)
    q = np.zeros((mdp.n_states, mdp.n_actions))
    delta = math.inf
    for it in range(1, max_iter + 1):
        v = v_from_q_policy(spec, lam, q, pi)
        q_new = q_from_v(mdp, spec, lam, v)
        delta = float(np.max(np.abs(q_new - q)))
        q = q_new
        if deltas is not None:
            deltas.append(delta)
        if delta < tol:
            return v_from_q_policy(spec, lam, q, pi)
    raise ConvergenceError(f"policy evaluation did not converge in {max_iter} iterations "
                           f"(last change {delta:.3g})", max_iter, delta)


# -- files ------------------------------------------------------------------

def mdp_to_dict(mdp: TabularMdp) -> dict:
    return {
        "format": FORMAT,
        "version": 1,
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "r_max": mdp.r_max,
        "reward": mdp.reward.ravel().tolist(),
        "transition": mdp.transition.ravel().tolist(),
        "initial": mdp.initial.tolist(),
        "provenance": dict(mdp.meta),
    }


def mdp_from_dict(d: dict) -> TabularMdp:
    if d.get("format") != FORMAT:
        raise ValueError(f"not an MDP file (format={d.get('format')!r})")
    S, A = int(d["n_states"]), int(d["n_actions"])
    reward = np.array(d["reward"], dtype=float)
    transition = np.array(d["transition"], dtype=float)
    if reward.size != S * A or transition.size != S * A * S:
        raise ValueError("array sizes do not match n_states / n_actions")
    mdp = TabularMdp(transition.reshape(S, A, S), reward.reshape(S, A), d["gamma"],
                     np.array(d["initial"], dtype=float), r_max=d.get("r_max", 1.0),
                     meta=dict(d.get("provenance", {})))
    return check(mdp)


def dumps_mdp(mdp: TabularMdp) -> str:
    # json writes floats with repr, the shortest string that round-trips exactly
    return json.dumps(mdp_to_dict(mdp), indent=1) + "\n"


def save_mdp(mdp: TabularMdp, path) -> str:
    """Write ``mdp`` as JSON (atomically); returns the sha256 of the file."""
    atomic_write_text(path, dumps_mdp(mdp))
    return sha256_file(path)


def load_mdp(path) -> TabularMdp:
    with open(path, encoding="utf-8") as fh:
        return mdp_from_dict(json.load(fh))


content_hash = sha256_file
