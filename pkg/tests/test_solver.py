import math

import numpy as np
import pytest

from regmdp.mdp import ConvergenceError, TabularMdp, grid_coords, gridworld, random_mdp
from regmdp.projection import project
from regmdp.regularizer import PRESET_NAMES, Shannon, Tsallis, preset
from regmdp.solver import (
    bellman_operator, load_solution, policy_iteration, rpi, save_solution, solve,
    solve_unregularized, value_iterate,
)

ALL = [preset(name) for name in PRESET_NAMES]
IDS = list(PRESET_NAMES)


def one_state(rewards, gamma):
    A = len(rewards)
    return TabularMdp(np.ones((1, A, 1)), np.array([rewards], dtype=float), gamma, [1.0])


@pytest.fixture(scope="module")
def small():
    return random_mdp(20, 5, 0.9, 0.5, seed=11)


# -- operator ---------------------------------------------------------------------

def test_bellman_examples():
    assert bellman_operator(one_state([1.0, 0.0], 0.5), None, 0.0, [0.0]) == pytest.approx([1.0])
    c = 0.4
    out = bellman_operator(one_state([c, c], 0.5), Shannon(), 1.0, [0.0])
    assert out == pytest.approx([c + math.log(2)])


def test_bellman_lambda_zero_policy_ties_low_index():
    v, pi = bellman_operator(one_state([1.0, 1.0, 0.5], 0.5), None, 0.0, [0.0], return_policy=True)
    assert np.array_equal(pi, [[1.0, 0.0, 0.0]])


@pytest.mark.parametrize("spec", ALL, ids=IDS)
def test_operator_properties(small, spec):
    rng = np.random.default_rng(0)
    T = lambda v: bellman_operator(small, spec, 0.5, v)
    for _ in range(20):
        v1, v2 = rng.uniform(-10, 10, (2, 20))
        assert np.max(np.abs(T(v1) - T(v2))) <= small.gamma * np.max(np.abs(v1 - v2)) + 1e-12
        hi = v1 + rng.uniform(0, 5, 20)
        assert np.all(T(v1) <= T(hi) + 1e-10)
        c = rng.uniform(-10, 10)
        assert np.max(np.abs(T(v1 + c) - T(v1) - small.gamma * c)) <= 1e-10


def test_bad_arguments(small):
    with pytest.raises(ValueError):
        bellman_operator(small, Shannon(), -1.0, np.zeros(20))
    with pytest.raises(ValueError):
        bellman_operator(small, None, 1.0, np.zeros(20))
    with pytest.raises(ValueError):
        value_iterate(small.replace(gamma=1.0), Shannon(), 1.0)
    with pytest.raises(ValueError):
        rpi(small, Shannon(), 0.0)
    with pytest.raises(ValueError):
        solve(small, Shannon(), 1.0, method="lp")


# -- value iteration ------------------------------------------------------------------

def test_vi_examples():
    sol = value_iterate(one_state([1.0], 0.5), None, 0.0, tol=1e-12)
    assert sol.v_star == pytest.approx([2.0], abs=1e-11)
    sol = value_iterate(one_state([1.0, 1.0], 0.5), Shannon(), 1.0, tol=1e-12)
    assert sol.v_star[0] == pytest.approx(2 * (1 + math.log(2)), abs=1e-11)
    assert np.allclose(sol.policy, 0.5)


def test_vi_residuals_decay(small):
    sol = value_iterate(small, Tsallis(0.5, 2), 0.3, tol=1e-10)
    r = np.array(sol.diagnostics["residuals"])
    assert np.all(r[1:] <= small.gamma * r[:-1] + 1e-12)
    assert sol.final_residual == r[-1] < 1e-10


def test_vi_max_iter(small):
    with pytest.raises(ConvergenceError):
        value_iterate(small, Shannon(), 1.0, tol=1e-12, max_iter=3)


@pytest.mark.parametrize("spec", ALL, ids=IDS)
def test_solution_invariants(small, spec):
    tol = 1e-10
    sol = value_iterate(small, spec, 0.2, tol=tol)
    tv = bellman_operator(small, spec, 0.2, sol.v_star)
    assert np.max(np.abs(tv - sol.v_star)) <= 10 * tol
    for s in range(small.n_states):
        res = project(spec, sol.q_star[s], 0.2)
        assert np.max(np.abs(res.pi - sol.policy[s])) < 1e-8
        assert abs(res.value - sol.v_star[s]) < 1e-8
    assert sol.diagnostics["value_gap"] < 1e-9


# -- RPI ------------------------------------------------------------------------------

def test_rpi_symmetric_one_state():
    sol = rpi(one_state([1.0, 1.0], 0.5), Shannon(), 1.0)
    assert sol.iterations <= 2
    assert np.allclose(sol.policy, 0.5)
    assert sol.v_star[0] == pytest.approx(2 * (1 + math.log(2)))


@pytest.mark.parametrize("spec", ALL, ids=IDS)
@pytest.mark.parametrize("lam", [0.05, 2.0])
def test_rpi_matches_vi(small, spec, lam):
    a = rpi(small, spec, lam, tol=1e-10)
    b = value_iterate(small, spec, lam, tol=1e-11)
    assert np.max(np.abs(a.v_star - b.v_star)) < 1e-8
    assert min(a.diagnostics["improvements"]) >= -1e-10


def test_rpi_warm_start(small):
    cold = rpi(small, Shannon(), 0.5, tol=1e-10)
    warm = rpi(small, Shannon(), 0.5, tol=1e-10, policy0=cold.policy)
    assert warm.iterations <= 2
    assert np.max(np.abs(warm.v_star - cold.v_star)) < 1e-9


# -- unregularized --------------------------------------------------------------------

def test_unregularized_example():
    sol = solve_unregularized(one_state([1.0, 0.0], 0.5), tol=1e-12)
    assert sol.v_star == pytest.approx([2.0])
    assert np.array_equal(sol.policy, [[1.0, 0.0]])


def test_unregularized_equals_vi_lambda_zero(small):
    a = solve_unregularized(small, tol=1e-9)
    b = value_iterate(small, None, 0.0, tol=1e-9)
    assert np.array_equal(a.v_star, b.v_star) and np.array_equal(a.policy, b.policy)
    c = solve(small, Shannon(), 0.0)
    assert np.array_equal(solve_unregularized(small).v_star, c.v_star)


def test_policy_iteration_agrees(small):
    vi = solve_unregularized(small, tol=1e-12)
    pi = policy_iteration(small)
    assert np.max(np.abs(vi.v_star - pi.v_star)) < 1e-10


def test_gridworld_shortest_path():
    N, gamma = 5, 0.99
    mdp = gridworld(N, gamma)
    sol = solve_unregularized(mdp, tol=1e-12)
    for s in range(mdp.n_states):
        x, y = grid_coords(N, s)
        k = min(abs(x - cx) + abs(y - cy) for cx in (-(N - 1), N - 1) for cy in (-(N - 1), N - 1))
        expected = 0.0 if k == 0 else gamma ** (k - 1)
        assert sol.v_star[s] == pytest.approx(expected, abs=1e-10)


# -- files --------------------------------------------------------------------------------

def test_solution_round_trip(tmp_path, small):
    sol = rpi(small, Tsallis(0.5, 2), 0.3)
    path = tmp_path / "sol.json"
    save_solution(sol, path, "tsallis:k=0.5,q=2", 1e-8, mdp_hash="ab" * 32)
    back = load_solution(path)
    for name in ("v_star", "q_star", "policy", "mu"):
        assert np.array_equal(getattr(back, name), getattr(sol, name))
    assert (back.iterations, back.solver, back.lam) == (sol.iterations, "rpi", 0.3)
