"""Per-state maximisation of sum_a pi(a) [Q(a) + lam * phi(pi(a))] over the simplex.

The maximiser has the form pi(a) = max{g((mu - Q(a)) / lam), 0} where mu is the
unique root of h(mu) = sum_a max{g((mu - Q(a)) / lam), 0} = 1. ``project_rows``
solves for mu in every row at once; ``project`` is the single-row wrapper.

``sparsemax``, ``softmax`` and ``brute_force_project`` are independent reference
solutions used by the tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .regularizer import Regularizer

SUPPORT_EPS = 1e-9  # entries below this are snapped to zero (finite f'(0+) only)
VALUE_TOL = 1e-9
MAX_ITER = 200


class ProjectionError(RuntimeError):
    """The multiplier search failed, or the two value formulas disagree."""


@dataclass
class ProjectionResult:
    """Optimal action distribution(s), multiplier(s) and regularized value(s).

    For a single row ``pi`` is 1-D and the other fields are scalars; for a batch
    ``pi`` is (S, A) and the rest are length-S arrays. ``value_gap`` is the
    largest disagreement seen between the two value formulas.
    """

    pi: np.ndarray
    mu: np.ndarray | float
    value: np.ndarray | float
    support_size: np.ndarray | int
    value_gap: float = 0.0
    iterations: int = 0


def _check_inputs(Q, lam):
    if not np.all(np.isfinite(Q)):
        raise ValueError("Q contains non-finite entries")
    if not (lam > 0 and math.isfinite(lam)):
        raise ValueError(f"lambda must be positive and finite, got {lam}; use the unregularized solver for 0")
    if Q.shape[-1] < 1:
        raise ValueError("need at least one action")


def mu_bracket(spec: Regularizer, Q, lam):
    """Bracket [lo, hi] with h(lo) >= 1 >= h(hi) for every row of Q.

    At mu = max Q + lam f'(1/A) every action gets at most 1/A, at
    mu = min Q + lam f'(1/A) every action gets at least 1/A, and at
    mu = max Q + lam f'(1-) the best action alone gets 1.
    """
    Q = np.atleast_2d(Q)
    n = Q.shape[1]
    qmax, qmin = Q.max(axis=1), Q.min(axis=1)
    fa = float(spec._f_prime(np.float64(1.0 / n))) if n > 1 else spec.limits[1]
    lo = np.maximum(qmax + lam * spec.limits[1], qmin + lam * fa)
    # the lower end can be tight (one-hot optimum); move it down a few ulps so
    # that rounding in (mu - Q) / lam cannot leave h(lo) just below 1
    lo = lo - 8 * np.finfo(float).eps * (np.abs(qmax) + lam * (1.0 + abs(spec.limits[1])))
    hi = qmax + lam * fa
    return lo, np.maximum(hi, lo)


def _probs(spec, Q, lam, mu):
    return spec._g((mu[:, None] - Q) / lam)


def _near_kink(spec, pi):
    if not spec.kinks:
        return np.zeros(pi.shape, dtype=bool)
    return np.any([np.abs(pi - c) < 1e-11 for c in spec.kinks], axis=0)


def _solve_mu(spec, Q, lam, mu0=None):
    """Newton on log h(mu), kept inside the bracket, with bisection fallback.

    A Newton step is accepted only if it lands strictly inside the current
    bracket and the previous step at least halved |h - 1|. Iteration stops
    once the Newton correction is at rounding level, so mu is accurate to a
    few ulps rather than to a fixed tolerance on h. ``mu0`` is an optional
    warm start (used when it lies inside the bracket).
    """
    lo, hi = mu_bracket(spec, Q, lam)
    # start from the lower end: rows whose optimum is (numerically) one-hot
    # finish there, since lo = max Q + lam f'(1) is then the multiplier
    mu = lo.copy()
    if mu0 is not None:
        mu0 = np.broadcast_to(np.asarray(mu0, dtype=float), mu.shape)
        inside = np.isfinite(mu0) & (mu0 >= lo) & (mu0 <= hi)
        mu = np.where(inside, mu0, mu)
    S = Q.shape[0]
    # |h - 1| cannot be resolved below the rounding of an A-term sum
    floor = 4 * Q.shape[1] * np.finfo(float).eps
    active = np.ones(S, dtype=bool)
    prev = np.full(S, np.inf)
    it = 0
    while np.any(active):
        it += 1
        if it > MAX_ITER:
            raise ProjectionError(f"multiplier search did not converge in {MAX_ITER} iterations")
        ia = np.flatnonzero(active)
        Qa, m = Q[ia], mu[ia]
        p = _probs(spec, Qa, lam, m)
        h = p.sum(axis=1)
        resid = h - 1.0
        a = np.where(resid >= 0, m, lo[ia])
        b = np.where(resid <= 0, m, hi[ia])
        lo[ia], hi[ia] = a, b
        interior = (p > 0) & ~_near_kink(spec, p)  # p = 1 uses the one-sided f''(1)
        with np.errstate(all="ignore"):
            dh = np.where(interior, 1.0 / (lam * spec._f_second(p)), 0.0).sum(axis=1)
            step = m - np.log(h) * h / dh
        ok = np.isfinite(step) & (step >= a) & (step <= b) & (np.abs(resid) <= 0.5 * prev[ia])
        nxt = np.where(ok, step, 0.5 * (a + b))
        tiny = 4 * np.finfo(float).eps * (np.abs(m) + lam)
        done = (np.abs(resid) <= floor) | (b - a <= tiny) | (ok & (np.abs(step - m) <= tiny))
        mu[ia] = np.where(done, m, nxt)
        prev[ia] = np.abs(resid)
        active[ia[done]] = False
    return mu, it


def _value_forms(spec, Q, lam, pi, mu):
    """Return (sum pi (Q + lam phi(pi)), mu - lam sum pi^2 phi'(pi)) per row.

    At a branch crossing of a min regularizer phi' does not exist; the
    subgradient element fixed by stationarity, (mu - Q) / lam, stands in for f'.
    """
    pos = pi > 0
    with np.errstate(all="ignore"):
        bonus = np.where(pos, pi * spec._phi(np.where(pos, pi, 1.0)), 0.0)
        form_i = np.sum(pi * Q + lam * bonus, axis=1)
        big = pi > 1e-300
        safe = np.where(big, pi, 1.0)
        sq = np.where(big, pi * (safe * spec._dphi(safe)), 0.0)
        kink = _near_kink(spec, pi) & pos
        if np.any(kink):
            sub = (mu[:, None] - Q) / lam - spec._phi(safe)
            sq = np.where(kink, pi * sub, sq)
        form_ii = mu - lam * np.sum(sq, axis=1)
    return form_i, form_ii


def value_tolerance(mu, Q, value):
    """Allowed disagreement between the two value formulas for each row.

    VALUE_TOL absolute, widened by a few hundred ulps of the magnitudes
    involved so that very large lambda (values ~ 1e6 and up) is not held to
    an absolute accuracy below double precision.
    """
    scale = np.abs(mu) + np.abs(value) + np.abs(Q).max(axis=-1)
    return VALUE_TOL + 256 * np.finfo(float).eps * scale


def project_rows(spec: Regularizer, Q, lam: float, check_value: bool = True, mu0=None) -> ProjectionResult:
    """Project every row of the (S, A) array ``Q``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    _check_inputs(Q, lam)
    mu, it = _solve_mu(spec, Q, lam, mu0)
    pi = _probs(spec, Q, lam, mu)
    if math.isfinite(spec.limits[0]):
        pi = np.where(pi < SUPPORT_EPS, 0.0, pi)
    pi = pi / pi.sum(axis=1, keepdims=True)
    form_i, form_ii = _value_forms(spec, Q, lam, pi, mu)
    gap = np.abs(form_i - form_ii)
    tol = value_tolerance(mu, Q, form_i)
    if check_value and np.any(gap > tol):
        s = int(np.argmax(gap - tol))
        raise ProjectionError(f"value formulas disagree by {gap[s]:.3g} in row {s}")
    return ProjectionResult(pi=pi, mu=mu, value=form_i, support_size=(pi > 0).sum(axis=1),
                            value_gap=float(gap.max()), iterations=it)


def project(spec: Regularizer, q_row, lam: float) -> ProjectionResult:
    """Unique maximiser over the simplex for one row of Q-values."""
    q = np.asarray(q_row, dtype=float)
    if q.ndim != 1:
        raise ValueError("q_row must be one-dimensional")
    r = project_rows(spec, q[None, :], lam)
    return ProjectionResult(pi=r.pi[0], mu=float(r.mu[0]), value=float(r.value[0]),
                            support_size=int(r.support_size[0]), value_gap=r.value_gap,
                            iterations=r.iterations)


def normalization_residual(spec: Regularizer, q_row, lam: float, mu: float) -> float:
    """h(mu) - 1; strictly decreasing in mu on the bracket."""
    q = np.asarray(q_row, dtype=float)
    _check_inputs(q, lam)
    return float(spec._g((mu - q) / lam).sum() - 1.0)


def regularized_value(spec: Regularizer, q_row, lam: float, result: ProjectionResult) -> float:
    """Value at the optimum, computed two ways; raises if they disagree."""
    q = np.asarray(q_row, dtype=float)[None, :]
    pi = np.asarray(result.pi, dtype=float)[None, :]
    mu = np.array([result.mu], dtype=float)
    form_i, form_ii = _value_forms(spec, q, lam, pi, mu)
    if abs(form_i[0] - form_ii[0]) > value_tolerance(mu, q, form_i)[0]:
        raise ProjectionError(f"value formulas disagree: {form_i[0]!r} vs {form_ii[0]!r}")
    return float(form_i[0])


def _f_prime_sides(spec, x, delta=1e-10):
    return spec._f_prime(x - delta), spec._f_prime(x + delta)


def kkt_residual(spec: Regularizer, q_row, lam: float, result: ProjectionResult) -> float:
    """Largest violation of stationarity and complementary slackness.

    Entries in the subnormal range are skipped: f' cannot be evaluated
    meaningfully there (log of a subnormal has lost most of its digits).
    """
    q = np.asarray(q_row, dtype=float)
    pi = np.asarray(result.pi, dtype=float)
    mu = float(result.mu)
    worst = 0.0
    pos = pi >= np.finfo(float).tiny
    if np.any(pos):
        kink = _near_kink(spec, pi) & pos
        smooth = pos & ~kink
        if np.any(smooth):
            worst = max(worst, float(np.max(np.abs(q[smooth] + lam * spec._f_prime(pi[smooth]) - mu))))
        if np.any(kink):
            left, right = _f_prime_sides(spec, pi[kink])
            s = (mu - q[kink]) / lam
            worst = max(worst, float(np.max(lam * np.maximum(0, np.maximum(right - s, s - left)))))
    at_zero = spec.limits[0]
    zero = pi == 0
    if np.any(zero) and math.isfinite(at_zero):
        worst = max(worst, float(np.max(np.maximum(0.0, q[zero] - (mu - lam * at_zero)))))
    return worst


# -- reference solutions ------------------------------------------------------

def sparsemax(z):
    """Euclidean projection of each row of z onto the simplex (sort-based)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    n = z.shape[1]
    u = -np.sort(-z, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    k = np.arange(1, n + 1)
    rho = np.count_nonzero(u - css / k > 0, axis=1)
    tau = css[np.arange(z.shape[0]), rho - 1] / rho
    return np.maximum(z - tau[:, None], 0.0)


project_simplex = sparsemax


def softmax(z):
    z = np.atleast_2d(np.asarray(z, dtype=float))
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def objective(spec: Regularizer, q_row, lam, pi):
    """sum_a pi(a) [Q(a) + lam phi(pi(a))] for one or many candidate pis (last axis)."""
    pi = np.asarray(pi, dtype=float)
    pos = pi > 0
    with np.errstate(all="ignore"):
        bonus = np.where(pos, pi * spec._phi(np.where(pos, pi, 1.0)), 0.0)
    return pi @ np.asarray(q_row, dtype=float) + lam * bonus.sum(axis=-1)


def _compositions(n_parts, total):
    """All non-negative integer vectors of length n_parts summing to total."""
    if n_parts == 1:
        return np.array([[total]])
    grids = np.meshgrid(*[np.arange(total + 1)] * (n_parts - 1), indexing="ij")
    free = np.stack([g.ravel() for g in grids], axis=1)
    free = free[free.sum(axis=1) <= total]
    return np.hstack([free, total - free.sum(axis=1, keepdims=True)])


def _grid_search(spec, q, lam, resolution):
    n = q.size
    coarse = {1: 1, 2: resolution, 3: 50, 4: 20}[n]
    levels = [coarse]
    while levels[-1] < resolution:
        levels.append(levels[-1] * 10)
    pts = _compositions(n, levels[0])
    best = pts[np.argmax(objective(spec, q, lam, pts / levels[0]))]
    window = np.arange(-30, 31)
    for N_prev, N in zip(levels[:-1], levels[1:]):
        center = best[:-1] * (N // N_prev)
        axes = np.meshgrid(*[c + window for c in center], indexing="ij")
        free = np.stack([a.ravel() for a in axes], axis=1)
        free = free[np.all(free >= 0, axis=1) & (free.sum(axis=1) <= N)]
        pts = np.hstack([free, N - free.sum(axis=1, keepdims=True)])
        best = pts[np.argmax(objective(spec, q, lam, pts / N))]
    return best / levels[-1]


def _gradient_ascent(spec, q, lam, iters=100_000):
    pi = np.full(q.size, 1.0 / q.size)
    for t in range(iters):
        grad = q + lam * spec._f_prime(np.maximum(pi, 1e-12))
        pi = sparsemax(pi + grad / (t + 10))[0]
    return pi


def brute_force_project(spec: Regularizer, q_row, lam: float, resolution: int = 2000,
                        method: str = "auto"):
    """Approximate maximiser without the multiplier characterisation.

    ``grid``: barycentric lattice search (|A| <= 4), refined around the best
    point by factors of 10 until the lattice spacing is at most 1/resolution.
    ``pgd``: projected gradient ascent with step 1/(t + 10).
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    q = np.asarray(q_row, dtype=float)
    if method == "auto":
        method = "grid" if q.size <= 4 else "pgd"
    if method == "grid":
        if q.size > 4:
            raise ValueError("grid search supports at most 4 actions")
        return _grid_search(spec, q, lam, resolution)
    if method == "pgd":
        return _gradient_ascent(spec, q, lam)
    raise ValueError(f"unknown method {method!r}")
