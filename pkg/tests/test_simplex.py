from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from wsac.simplex import LPInfeasible, LPUnbounded, solve_lp


def test_small_textbook_lp():
    # max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  -> (2, 6), value 36
    res = solve_lp([-3, -5], A_ub=[[1, 0], [0, 2], [3, 2]], b_ub=[4, 12, 18])
    assert np.allclose(res.x, [2, 6])
    assert res.fun == pytest.approx(-36)


def test_equality_with_negative_rhs():
    res = solve_lp([1, 1], A_eq=[[1, -1]], b_eq=[-2])
    assert np.allclose(res.x, [0, 2])


def test_infeasible_and_unbounded():
    with pytest.raises(LPInfeasible):
        solve_lp([1, 1], A_eq=[[1, 1]], b_eq=[-1])
    with pytest.raises(LPUnbounded):
        solve_lp([-1, 0], A_ub=[[0, 1]], b_ub=[1])


def test_beale_cycling_example_terminates():
    # Classic degenerate LP on which the textbook largest-coefficient rule cycles.
    c = [-0.75, 150, -0.02, 6]
    A = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    b = [0, 0, 1]
    res = solve_lp(c, A_ub=A, b_ub=b)
    ref = linprog(c, A_ub=A, b_ub=b, method="highs")
    assert res.fun == pytest.approx(ref.fun, abs=1e-9)


def test_redundant_equalities():
    A = [[1, 1, 0], [2, 2, 0], [0, 1, 1]]
    res = solve_lp([1, 2, 3], A_eq=A, b_eq=[1, 2, 1])
    ref = linprog([1, 2, 3], A_eq=A, b_eq=[1, 2, 1], method="highs")
    assert res.fun == pytest.approx(ref.fun, abs=1e-9)


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 4), st.integers(0, 3))
def test_matches_highs_on_random_bounded_lps(seed, n, m_ub, m_eq):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=n)
    # A row of ones keeps the feasible region bounded.
    A_ub = np.vstack([rng.uniform(-1, 1, (m_ub, n)), np.ones((1, n))])
    x0 = rng.uniform(0, 1, n)
    b_ub = A_ub @ x0 + rng.uniform(0, 1, m_ub + 1)
    A_eq = rng.uniform(-1, 1, (m_eq, n)) if m_eq else None
    b_eq = A_eq @ x0 if m_eq else None
    res = solve_lp(c, A_eq, b_eq, A_ub, b_ub)
    ref = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, method="highs")
    assert ref.status == 0
    assert res.fun == pytest.approx(ref.fun, abs=1e-7)
    assert np.all(res.x >= -1e-9)
    assert np.all(A_ub @ res.x <= b_ub + 1e-7)
    if m_eq:
        assert np.allclose(A_eq @ res.x, b_eq, atol=1e-7)
