"""Policy regularizers phi(x) on (0, 1] and the quantities derived from them.

Every regularizer exposes phi, its first two derivatives, the derivative of
f(x) = x * phi(x) (``f_prime``), the one-sided limits of ``f_prime`` at 0 and 1,
and ``g``, the clamped inverse of ``f_prime``. All methods are vectorised over
numpy arrays. Instances are immutable.

The public functions at the bottom of the module (``phi``, ``f_prime``, ``g``,
...) validate their inputs; the underscore methods on the classes do not and are
meant for the hot loops in :mod:`regmdp.projection`.
"""
from __future__ import annotations

import functools
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import bisect
from scipy.special import lambertw

logger = logging.getLogger(__name__)

G_EPS = 1e-12  # bisection bracket (EPS, 1 - EPS) and width tolerance for g
LOG_TINY = math.log(np.finfo(float).tiny)  # smallest log-probability the solver searches
T_TOL = 1e-14  # absolute tolerance on log x, i.e. relative tolerance on x
KINK_TOL = 1e-12  # tolerance when locating a crossing of min branches
KINK_GUARD = 1e-9  # phi' raises inside this distance of a crossing


class DomainError(ValueError):
    """Argument outside the domain of the function."""


class NonDifferentiableError(ValueError):
    """Derivative requested at a branch crossing of a min regularizer."""


class InvalidRegularizer(ValueError):
    """Parameters rejected, or the regularizer fails the admissibility audit."""


def _arr(x):
    return np.asarray(x, dtype=float)


def _out(x, like):
    # return python floats for scalar input
    return float(x) if np.ndim(like) == 0 else x


@dataclass(frozen=True)
class Regularizer:
    """Base class. Subclasses implement ``_phi``, ``_dphi``, ``_d2phi`` and ``_limits``."""

    def __post_init__(self):
        self._validate()
        _audit(self)

    def _validate(self):
        pass

    # -- unchecked, vectorised primitives -------------------------------
    def _phi(self, x):
        raise NotImplementedError

    def _dphi(self, x):
        raise NotImplementedError

    def _d2phi(self, x):
        raise NotImplementedError

    def _limits(self) -> tuple[float, float]:
        raise NotImplementedError

    def _f_prime(self, x):
        return self._phi(x) + x * self._dphi(x)

    def _f_second(self, x):
        return 2.0 * self._dphi(x) + x * self._d2phi(x)

    def _g(self, y):
        basis = self._basis()
        if basis is not None and (basis[2] == 0 or basis[3] == 0):
            return _g_basis(self, basis, y)
        return _g_newton(self, y)

    def _basis(self):
        """Coefficients (c0, c1, c2, cl) with f'(x) = c0 + c1 x + c2 x^2 - cl log x, or None."""
        return None

    @property
    def kinks(self) -> tuple[float, ...]:
        """Points in (0, 1) where phi is not differentiable."""
        return ()

    @property
    def limits(self) -> tuple[float, float]:
        """``(lim_{x->0+} f'(x), lim_{x->1-} f'(x))``."""
        return self._limits()

    def to_string(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.to_string()


@dataclass(frozen=True)
class Shannon(Regularizer):
    """phi(x) = -log x."""

    def _phi(self, x):
        with np.errstate(divide="ignore"):
            return -np.log(x)

    def _dphi(self, x):
        with np.errstate(divide="ignore"):
            return -1.0 / x

    def _d2phi(self, x):
        with np.errstate(divide="ignore"):
            return 1.0 / (x * x)

    def _f_prime(self, x):
        with np.errstate(divide="ignore"):
            return -np.log(x) - 1.0

    def _f_second(self, x):
        with np.errstate(divide="ignore"):
            return -1.0 / x

    def _limits(self):
        return math.inf, -1.0

    def _basis(self):
        return (-1.0, 0.0, 0.0, 1.0)

    def _g(self, y):
        y = _arr(y)
        with np.errstate(over="ignore"):
            return np.minimum(np.exp(-1.0 - y), 1.0)

    def to_string(self):
        return "shannon"


@dataclass(frozen=True)
class Tsallis(Regularizer):
    """phi(x) = k / (q - 1) * (1 - x**(q - 1)); the polynomial family."""

    k: float = 0.5
    q: float = 2.0

    def _validate(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise InvalidRegularizer(f"tsallis needs k > 0, got {self.k}")
        if not (self.q > 0 and math.isfinite(self.q)) or self.q == 1:
            raise InvalidRegularizer(f"tsallis needs q > 0 and q != 1, got {self.q}")

    @property
    def _c(self):
        return self.k / (self.q - 1.0)

    def _phi(self, x):
        if self.q == 2.0:
            return self.k * (1.0 - x)
        with np.errstate(divide="ignore"):
            return self._c * (1.0 - np.power(x, self.q - 1.0))

    def _dphi(self, x):
        if self.q == 2.0:
            return -self.k * np.ones_like(_arr(x))
        with np.errstate(divide="ignore"):
            return -self.k * np.power(x, self.q - 2.0)

    def _d2phi(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return -self.k * (self.q - 2.0) * np.power(x, self.q - 3.0)

    def _f_prime(self, x):
        if self.q == 2.0:
            return self.k * (1.0 - 2.0 * x)
        with np.errstate(divide="ignore"):
            return self._c * (1.0 - self.q * np.power(x, self.q - 1.0))

    def _f_second(self, x):
        with np.errstate(divide="ignore"):
            return -self.k * self.q * np.power(x, self.q - 2.0)

    def _limits(self):
        at_zero = self._c if self.q > 1 else math.inf
        return at_zero, -self.k

    def _basis(self):
        if self.q == 2.0:
            return (self.k, -2.0 * self.k, 0.0, 0.0)
        if self.q == 3.0:
            return (0.5 * self.k, 0.0, -1.5 * self.k, 0.0)
        return None

    def _g(self, y):
        y = _arr(y)
        at_zero, at_one = self._limits()
        if self.q == 2.0:
            x = (self.k - y) / (2.0 * self.k)
        else:
            base = (1.0 - y / self._c) / self.q
            with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                x = np.power(np.maximum(base, 0.0), 1.0 / (self.q - 1.0))
        x = np.where(y >= at_zero, 0.0, x)
        return np.clip(np.where(y <= at_one, 1.0, x), 0.0, 1.0)

    def to_string(self):
        return f"tsallis:k={self.k!r},q={self.q!r}"


@dataclass(frozen=True)
class Cosine(Regularizer):
    """phi(x) = cos(theta x) - cos(theta)."""

    theta: float = math.pi / 2

    def _validate(self):
        if not (0 < self.theta <= math.pi / 2):
            raise InvalidRegularizer(f"cos needs theta in (0, pi/2], got {self.theta}")

    def _phi(self, x):
        return np.cos(self.theta * x) - math.cos(self.theta)

    def _dphi(self, x):
        return -self.theta * np.sin(self.theta * x)

    def _d2phi(self, x):
        return -self.theta ** 2 * np.cos(self.theta * x)

    def _limits(self):
        t = self.theta
        return 1.0 - math.cos(t), -t * math.sin(t)

    def to_string(self):
        return f"cos:theta={self.theta!r}"


@dataclass(frozen=True)
class Sine(Regularizer):
    """phi(x) = sin(theta) - sin(theta x).

    x * phi(x) is strictly concave only while theta * tan(theta) < 2, so large
    theta is rejected by the construction audit.
    """

    theta: float = 1.0

    def _validate(self):
        if not (0 < self.theta <= math.pi / 2):
            raise InvalidRegularizer(f"sin needs theta in (0, pi/2], got {self.theta}")

    def _phi(self, x):
        return math.sin(self.theta) - np.sin(self.theta * x)

    def _dphi(self, x):
        return -self.theta * np.cos(self.theta * x)

    def _d2phi(self, x):
        return self.theta ** 2 * np.sin(self.theta * x)

    def _limits(self):
        t = self.theta
        return math.sin(t), -t * math.cos(t)

    def to_string(self):
        return f"sin:theta={self.theta!r}"


@dataclass(frozen=True)
class Exponential(Regularizer):
    """phi(x) = q - x**k * q**x with k >= 0, q >= 1."""

    k: float = 0.0
    q: float = math.e

    def _validate(self):
        if not (self.k >= 0 and math.isfinite(self.k)):
            raise InvalidRegularizer(f"exp needs k >= 0, got {self.k}")
        if not (self.q >= 1 and math.isfinite(self.q)):
            raise InvalidRegularizer(f"exp needs q >= 1, got {self.q}")

    @property
    def _L(self):
        return math.log(self.q)

    def _xk(self, x, p):
        # x**p with the k = 0 case kept exact
        if p == 0:
            return np.ones_like(_arr(x))
        with np.errstate(divide="ignore"):
            return np.power(x, p)

    def _phi(self, x):
        return self.q - self._xk(x, self.k) * np.power(self.q, x)

    def _dphi(self, x):
        L, k = self._L, self.k
        qx = np.power(self.q, x)
        if k == 0:
            return -qx * L
        return -qx * self._xk(x, k - 1.0) * (k + x * L)

    def _d2phi(self, x):
        L, k = self._L, self.k
        qx = np.power(self.q, x)
        if k == 0:
            return -qx * L * L
        inner = k * (k - 1.0) + 2.0 * k * x * L + (x * L) ** 2
        with np.errstate(invalid="ignore"):
            return -qx * self._xk(x, k - 2.0) * inner

    def _f_prime(self, x):
        L, k = self._L, self.k
        return self.q - np.power(self.q, x) * self._xk(x, k) * (k + 1.0 + x * L)

    def _f_second(self, x):
        L, k = self._L, self.k
        inner = (x * L) ** 2 + 2.0 * (k + 1.0) * x * L + k * (k + 1.0)
        if k == 0:
            return -np.power(self.q, x) * L * (x * L + 2.0)
        return -np.power(self.q, x) * self._xk(x, k - 1.0) * inner

    def _limits(self):
        at_zero = self.q - 1.0 if self.k == 0 else self.q
        return at_zero, -self.q * (self.k + self._L)

    def _g(self, y):
        if self.k != 0:
            return _g_newton(self, y)
        # q^x (1 + x L) = q - y  <=>  (1 + xL) e^(1 + xL) = e (q - y)
        y = _arr(y)
        at_zero, at_one = self._limits()
        c = np.clip(self.q - y, 1.0, self.q * (1.0 + self._L))
        x = (lambertw(math.e * c).real - 1.0) / self._L
        x = np.where(y >= at_zero, 0.0, np.where(y <= at_one, 1.0, x))
        return np.clip(x, 0.0, 1.0)

    def to_string(self):
        return f"exp:k={self.k!r},q={self.q!r}"


@dataclass(frozen=True)
class WeightedSum(Regularizer):
    """sum_i w_i * phi_i(x) with non-negative weights."""

    terms: tuple[tuple[float, Regularizer], ...] = ()

    def _validate(self):
        object.__setattr__(self, "terms", tuple((float(w), r) for w, r in self.terms))
        if not self.terms:
            raise InvalidRegularizer("sum needs at least one term")
        for w, r in self.terms:
            if not (w >= 0 and math.isfinite(w)):
                raise InvalidRegularizer(f"sum weights must be finite and >= 0, got {w}")
            if not isinstance(r, Regularizer):
                raise InvalidRegularizer(f"not a regularizer: {r!r}")
        if not any(w > 0 for w, _ in self.terms):
            raise InvalidRegularizer("sum needs at least one positive weight")

    @property
    def _active(self):
        return [(w, r) for w, r in self.terms if w > 0]

    def _combine(self, method, x):
        return sum(w * getattr(r, method)(x) for w, r in self._active)

    def _phi(self, x):
        return self._combine("_phi", x)

    def _dphi(self, x):
        return self._combine("_dphi", x)

    def _d2phi(self, x):
        return self._combine("_d2phi", x)

    def _f_prime(self, x):
        return self._combine("_f_prime", x)

    def _f_second(self, x):
        return self._combine("_f_second", x)

    def _limits(self):
        lims = [(w, r.limits) for w, r in self._active]
        at_zero = sum(w * z for w, (z, _) in lims)
        at_one = sum(w * o for w, (_, o) in lims)
        return at_zero, at_one

    def _basis(self):
        parts = [(w, r._basis()) for w, r in self._active]
        if any(b is None for _, b in parts):
            return None
        return tuple(sum(w * b[i] for w, b in parts) for i in range(4))

    @property
    def kinks(self):
        return tuple(sorted({c for _, r in self._active for c in r.kinks}))

    def to_string(self):
        return "sum(" + "+".join(f"{w!r}*{r.to_string()}" for w, r in self.terms) + ")"


@dataclass(frozen=True)
class Min(Regularizer):
    """Pointwise min{phi_left, phi_right}.

    The crossings of the two branches split (0, 1) into intervals on which one
    branch is active; each interval is handled with that branch's own formulas.
    """

    left: Regularizer = None
    right: Regularizer = None
    _pieces: tuple = field(init=False, repr=False, compare=False, default=())

    def _validate(self):
        if not isinstance(self.left, Regularizer) or not isinstance(self.right, Regularizer):
            raise InvalidRegularizer("min needs two regularizers")
        object.__setattr__(self, "_pieces", _min_pieces(self.left, self.right))

    @property
    def kinks(self):
        own = tuple(p[0] for p in self._pieces[1:])
        inner = [c for _, _, r in self._pieces for c in r.kinks]
        return tuple(sorted(set(own) | set(inner)))

    def _piecewise(self, method, x):
        x = _arr(x)
        if len(self._pieces) == 1:
            return getattr(self._pieces[0][2], method)(x)
        cuts = np.array([p[0] for p in self._pieces[1:]])
        which = np.searchsorted(cuts, x, side="right")
        out = np.empty(np.shape(x))
        for j, (_, _, r) in enumerate(self._pieces):
            m = which == j
            if np.any(m):
                out[m] = getattr(r, method)(x[m])
        return out if np.ndim(x) else out[()]

    def _phi(self, x):
        return np.minimum(self.left._phi(x), self.right._phi(x))

    def _dphi(self, x):
        return self._piecewise("_dphi", x)

    def _d2phi(self, x):
        return self._piecewise("_d2phi", x)

    def _f_prime(self, x):
        return self._piecewise("_f_prime", x)

    def _f_second(self, x):
        return self._piecewise("_f_second", x)

    def _limits(self):
        return self._pieces[0][2].limits[0], self._pieces[-1][2].limits[1]

    def _g(self, y):
        # generalised inverse: between two pieces f' jumps down, and every y in
        # the gap maps to the crossing point
        y = _arr(y)
        x = np.zeros(np.shape(y))
        for lo, hi, r in self._pieces:
            x = x + (np.clip(r._g(y), lo, hi) - lo)
        return x

    def to_string(self):
        return f"min({self.left.to_string()},{self.right.to_string()})"


def _min_pieces(a: Regularizer, b: Regularizer):
    """Split (0, 1) at the sign changes of phi_a - phi_b."""
    grid = np.unique(np.concatenate([
        np.logspace(-9, -1, 400),
        np.linspace(0.1, 1.0 - 1e-6, 1200),
    ]))
    diff = a._phi(grid) - b._phi(grid)
    scale = np.maximum(np.abs(a._phi(grid)), np.abs(b._phi(grid))) + 1e-300
    sign = np.where(np.abs(diff) <= 1e-13 * scale, 0.0, np.sign(diff))
    nz = np.flatnonzero(sign)
    crossings = []
    for i, j in zip(nz[:-1], nz[1:]):
        if sign[i] != sign[j]:
            fn = lambda t: float(a._phi(t) - b._phi(t))
            crossings.append(bisect(fn, grid[i], grid[j], xtol=KINK_TOL))
    if len(crossings) > 1:
        logger.warning("min(%s, %s) has %d branch crossings on (0,1)",
                       a.to_string(), b.to_string(), len(crossings))
    cuts = [0.0] + crossings + [1.0]
    pieces = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = np.sqrt(lo * hi) if lo > 0 else min(1e-9, hi / 2)
        if lo > 0 and hi == 1.0:
            mid = 0.5 * (lo + hi)
        pieces.append((lo, hi, a if a._phi(mid) <= b._phi(mid) else b))
    return tuple(pieces)


def _g_basis(reg: Regularizer, basis, y):
    """Closed-form inverse when f' is quadratic in x or linear in (x, log x)."""
    c0, c1, c2, cl = basis
    y = _arr(y)
    at_zero, at_one = reg.limits
    r = c0 - y
    with np.errstate(all="ignore"):
        if cl == 0:
            # -c2 x^2 - c1 x = r, both coefficients >= 0; stable positive root
            a, b = -c2, -c1
            x = 2.0 * r / (b + np.sqrt(b * b + 4.0 * a * np.maximum(r, 0.0)))
        else:
            # log x + a x = r / cl  =>  x = W(a e^(r/cl)) / a
            a = -c1 / cl
            e = r / cl
            x = np.exp(e) if a == 0 else lambertw(a * np.exp(np.minimum(e, a + 1.0))).real / a
    x = np.where(y >= at_zero, 0.0, np.where(y <= at_one, 1.0, x))
    return np.clip(x, 0.0, 1.0)


def _g_newton(reg: Regularizer, y):
    """Clamped inverse of f' by Newton steps safeguarded with bisection."""
    y = _arr(y)
    at_zero, at_one = reg.limits
    flat = np.atleast_1d(y).astype(float).ravel()
    out = np.where(flat >= at_zero, 0.0, np.where(flat <= at_one, 1.0, np.nan))
    idx = np.flatnonzero(np.isnan(out))
    if idx.size:
        out[idx] = _solve_decreasing(reg, flat[idx])
    out = out.reshape(np.shape(y))
    return out if np.ndim(y) else out[()]


@functools.lru_cache(maxsize=64)
def _table(reg: Regularizer):
    """f' tabulated on a grid in t = log x, used to bracket and seed Newton."""
    t = np.unique(np.concatenate([np.linspace(LOG_TINY, -5.0, 120), np.linspace(-5.0, 0.0, 400)]))
    with np.errstate(all="ignore"):
        f = reg._f_prime(np.exp(t))
    return t, f


def _solve_decreasing(reg: Regularizer, y, max_iter=200):
    """Solve f'(x) = y for x in (0, 1) elementwise, f' strictly decreasing.

    Works in t = log x so that very small roots keep full relative accuracy.
    The start and bracket come from a tabulation of f'; Newton steps are used
    while they stay inside the bracket and at least halve the residual,
    otherwise the bracket is bisected.
    """
    tg, fg = _table(reg)
    # fg is decreasing; locate fg[j-1] >= y > fg[j]
    j = np.clip(np.searchsorted(-fg, -y, side="right"), 1, tg.size - 1)
    a, b = tg[j - 1].copy(), tg[j].copy()
    f0, f1 = fg[j - 1], fg[j]
    with np.errstate(all="ignore"):
        w = np.where(f0 > f1, (f0 - y) / (f0 - f1), 0.5)
    t = a + np.clip(w, 0.0, 1.0) * (b - a)
    n = y.size
    prev = np.full(n, np.inf)
    active = np.ones(n, dtype=bool)
    for _ in range(max_iter):
        ia = np.flatnonzero(active)
        if ia.size == 0:
            break
        ta = t[ia]
        xa = np.exp(ta)
        with np.errstate(all="ignore"):
            F = reg._f_prime(xa) - y[ia]
            newton = ta - F / (reg._f_second(xa) * xa)
        aa = np.where(F > 0, ta, a[ia])
        bb = np.where(F < 0, ta, b[ia])
        a[ia], b[ia] = aa, bb
        ok = np.isfinite(newton) & (newton >= aa) & (newton <= bb) & (np.abs(F) <= 0.5 * prev[ia])
        nxt = np.where(ok, newton, 0.5 * (aa + bb))
        done = (F == 0) | (bb - aa <= T_TOL) | (ok & (np.abs(newton - ta) <= T_TOL))
        t[ia] = np.where(F == 0, ta, nxt)
        prev[ia] = np.abs(F)
        active[ia[done]] = False
    return np.exp(t)


def g_bisect(reg: Regularizer, y):
    """Reference inverse of f' by plain bisection on (EPS, 1 - EPS)."""
    y = _arr(y)
    at_zero, at_one = reg.limits
    flat = np.atleast_1d(y).astype(float).ravel()
    a = np.full(flat.shape, G_EPS)
    b = np.full(flat.shape, 1.0 - G_EPS)
    while np.any(b - a > G_EPS):
        m = 0.5 * (a + b)
        right = reg._f_prime(m) > flat
        a = np.where(right, m, a)
        b = np.where(right, b, m)
    x = 0.5 * (a + b)
    x = np.where(flat >= at_zero, 0.0, np.where(flat <= at_one, 1.0, x))
    x = x.reshape(np.shape(y))
    return x if np.ndim(y) else x[()]


def _audit(reg: Regularizer):
    """Check phi(1) = 0, phi non-increasing and x*phi(x) strictly concave on a grid."""
    if reg._phi(np.float64(1.0)) != 0:
        raise InvalidRegularizer(f"{reg.to_string()}: phi(1) != 0")
    x = np.linspace(1e-3, 1.0, 1000)
    p = reg._phi(x)
    if not np.all(np.isfinite(p)):
        raise InvalidRegularizer(f"{reg.to_string()}: phi not finite on (0,1]")
    if np.any(np.diff(p) > 1e-12 * (1.0 + np.abs(p[1:]))):
        raise InvalidRegularizer(f"{reg.to_string()}: phi is increasing somewhere")
    f = x * p
    d2 = f[:-2] - 2.0 * f[1:-1] + f[2:]
    if not np.all(d2 < 0):
        bad = x[1:-1][d2 >= 0][0]
        raise InvalidRegularizer(f"{reg.to_string()}: x*phi(x) not strictly concave near x={bad:.4g}")


# -- public, validated functional interface --------------------------------

def _check_open(x, right_closed):
    xa = _arr(x)
    ok = (xa > 0) & ((xa <= 1) if right_closed else (xa < 1))
    if not np.all(ok):
        raise DomainError(f"argument outside (0, 1{']' if right_closed else ')'}: {x}")
    return xa


def phi(spec: Regularizer, x):
    xa = _check_open(x, right_closed=True)
    return _out(spec._phi(xa), x)


def _check_kinks(spec, xa):
    for c in spec.kinks:
        if np.any(np.abs(xa - c) < KINK_GUARD):
            raise NonDifferentiableError(f"{spec.to_string()} is not differentiable at x={c:.12g}")


def phi_prime(spec: Regularizer, x):
    xa = _check_open(x, right_closed=False)
    _check_kinks(spec, xa)
    return _out(spec._dphi(xa), x)


def f_prime(spec: Regularizer, x):
    """phi(x) + x phi'(x); strictly decreasing on (0, 1)."""
    xa = _check_open(x, right_closed=False)
    _check_kinks(spec, xa)
    return _out(spec._f_prime(xa), x)


def f_prime_boundary(spec: Regularizer) -> tuple[float, float]:
    return spec.limits


def g(spec: Regularizer, y):
    """Inverse of f', clamped: 0 above f'(0+), 1 below f'(1-)."""
    return _out(spec._g(_arr(y)), y)


def induces_sparsity(spec: Regularizer) -> bool:
    """True iff f'(0+) is finite, the necessary condition for sparse optimal policies."""
    return math.isfinite(spec.limits[0])


def combine_sum(terms: Sequence[tuple[float, Regularizer]]) -> Regularizer:
    return WeightedSum(tuple(terms))


def combine_min(a: Regularizer, b: Regularizer) -> Regularizer:
    return Min(a, b)


def entropy_like(spec: Regularizer, p, atol=1e-9):
    """sum_a p(a) phi(p(a)) with 0 * phi(0) = 0."""
    p = _arr(p)
    if p.ndim != 1 or np.any(p < -atol) or abs(p.sum() - 1.0) > atol:
        raise DomainError("p is not a probability vector")
    p = np.clip(p, 0.0, 1.0)
    pos = p > 0
    return float(np.sum(p[pos] * spec._phi(p[pos])))


# -- presets and string grammar ---------------------------------------------

PRESETS = {
    "shannon": "shannon",
    "tsallis": "tsallis:k=0.5,q=2",
    "cos": "cos:theta=pi/2",
    "exp": "exp:k=0,q=e",
    "min": "min(shannon,tsallis:k=2,q=2)",
    "poly": "sum(1*tsallis:k=0.5,q=2+1*tsallis:k=2,q=3)",
    "mix": "sum(1*shannon+1*tsallis:k=0.5,q=2)",
}
PRESET_NAMES = tuple(PRESETS)


def _number(tok: str) -> float:
    consts = {"pi": math.pi, "e": math.e}
    if tok[:1] in "+-" and tok[1:2]:
        sign = -1.0 if tok[0] == "-" else 1.0
        return sign * _number(tok[1:])
    if "/" in tok:
        num, den = tok.split("/", 1)
        return _number(num) / _number(den)
    if tok in consts:
        return consts[tok]
    try:
        return float(tok)
    except ValueError:
        raise InvalidRegularizer(f"bad number {tok!r}") from None


_PARAMS = {"tsallis": ("k", "q"), "cos": ("theta",), "sin": ("theta",), "exp": ("k", "q")}
_CLASSES = {"tsallis": Tsallis, "cos": Cosine, "sin": Sine, "exp": Exponential}


class _Parser:
    def __init__(self, text):
        self.s = re.sub(r"\s+", "", text)
        self.i = 0

    def error(self, msg):
        raise InvalidRegularizer(f"{msg} at position {self.i} in {self.s!r}")

    def peek(self, tok):
        return self.s.startswith(tok, self.i)

    def eat(self, tok):
        if not self.peek(tok):
            self.error(f"expected {tok!r}")
        self.i += len(tok)

    def name(self):
        m = re.compile(r"[a-z]+").match(self.s, self.i)
        if not m:
            self.error("expected a regularizer name")
        self.i = m.end()
        return m.group()

    def number(self):
        m = re.compile(r"[+-]?(?:[0-9.]+(?:e[+-]?[0-9]+)?|pi|e)(?:/(?:[0-9.]+(?:e[+-]?[0-9]+)?|pi|e))?").match(self.s, self.i)
        if not m or not m.group():
            self.error("expected a number")
        self.i = m.end()
        return _number(m.group())

    def spec(self) -> Regularizer:
        name = self.name()
        if name == "shannon":
            return Shannon()
        if name == "sum":
            self.eat("(")
            terms = [self.term()]
            while self.peek("+"):
                self.eat("+")
                terms.append(self.term())
            self.eat(")")
            return WeightedSum(tuple(terms))
        if name == "min":
            self.eat("(")
            a = self.spec()
            self.eat(",")
            b = self.spec()
            self.eat(")")
            return Min(a, b)
        if name in _PARAMS:
            self.eat(":")
            values = {}
            for j, key in enumerate(_PARAMS[name]):
                if j:
                    self.eat(",")
                self.eat(f"{key}=")
                values[key] = self.number()
            return _CLASSES[name](**values)
        self.error(f"unknown regularizer {name!r}")

    def term(self):
        w = self.number()
        self.eat("*")
        return w, self.spec()


def parse(text: str) -> Regularizer:
    """Parse the regularizer grammar, e.g. ``min(shannon,tsallis:k=2,q=2)``.

    The bare preset names in :data:`PRESETS` are accepted as well.
    """
    key = re.sub(r"\s+", "", text)
    if key in PRESETS and key != "shannon":
        key = PRESETS[key]
    p = _Parser(key)
    spec = p.spec()
    if p.i != len(p.s):
        p.error("trailing input")
    return spec


def preset(name: str) -> Regularizer:
    return parse(PRESETS[name])
