from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contractlp.platoon import PlatoonParams, build_platoon
from contractlp.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem, solve, solve_all
from contractlp.verification import build_groups
from oracles import random_pointed_lp, vertex_oracle

seeds = st.integers(0, 2**32 - 1)


def lp1(c: float, rows, rhs) -> LpProblem:
    return LpProblem(np.array([c]), None, None, np.array(rows, dtype=float).reshape(-1, 1), np.array(rhs, dtype=float))


def test_spec_examples():
    out = solve(lp1(0.0, [1.0], [1.0]))
    assert out.status == OPTIMAL and out.value == 0.0
    out = solve(lp1(1.0, [1.0, -1.0], [3.0, 0.0]))
    assert out.status == OPTIMAL and out.value == pytest.approx(3.0)
    np.testing.assert_allclose(out.point, [3.0])
    assert solve(LpProblem(np.array([1.0]))).status == UNBOUNDED
    out = solve(lp1(1.0, [1.0, -1.0], [0.0, -1.0]))
    assert out.status == INFEASIBLE and out.value is None and out.point is None


def test_equality_constraints_and_offset():
    # maximize x + y + 2 s.t. x + y = 3, x <= 1, y <= 5
    lp = LpProblem(
        np.array([1.0, 1.0]), np.array([[1.0, 1.0]]), np.array([3.0]), np.eye(2), np.array([1.0, 5.0]), offset=2.0
    )
    out = solve(lp)
    assert out.status == OPTIMAL and out.value == pytest.approx(5.0)
    assert lp.max_violation(out.point) <= 1e-9
    # inconsistent equalities
    bad = LpProblem(np.array([1.0, 0.0]), np.array([[1.0, 1.0], [2.0, 2.0]]), np.array([1.0, 3.0]))
    assert solve(bad).status == INFEASIBLE
    # redundant equalities are fine
    red = LpProblem(
        np.array([1.0, 0.0]), np.array([[1.0, 1.0], [2.0, 2.0]]), np.array([1.0, 2.0]), np.array([[-1.0, 0.0]]), [0.0]
    )
    assert solve(red).status == UNBOUNDED


def test_dimension_errors():
    with pytest.raises(ValueError):
        LpProblem(np.array([]))
    with pytest.raises(ValueError):
        LpProblem(np.ones(2), None, None, np.ones((1, 3)), np.ones(1))
    with pytest.raises(ValueError):
        LpProblem(np.ones(2), np.ones((1, 2)), np.ones(2))


@settings(max_examples=150, deadline=None)
@given(seed=seeds)
def test_matches_vertex_oracle(seed):
    c, A_eq, b_eq, A_in, b_in = random_pointed_lp(np.random.default_rng(seed))
    lp = LpProblem(c, A_eq, b_eq, A_in, b_in)
    status, value = vertex_oracle(c, A_eq, b_eq, A_in, b_in)
    out = solve(lp)
    assert out.status == status
    if status == OPTIMAL:
        assert abs(out.value - value) <= 1e-7 * (1 + abs(value))
        assert abs(lp.value_at(out.point) - out.value) <= 1e-9 * (1 + abs(value))
        assert lp.max_violation(out.point) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(seed=seeds)
def test_deterministic(seed):
    lp = LpProblem(*random_pointed_lp(np.random.default_rng(seed)))
    a, b = solve(lp), solve(lp)
    assert a.status == b.status and a.value == b.value
    if a.point is not None:
        assert np.array_equal(a.point, b.point)


@settings(max_examples=50, deadline=None)
@given(seed=seeds)
def test_solve_all_matches_solve(seed):
    rng = np.random.default_rng(seed)
    _, A_eq, b_eq, A_in, b_in = random_pointed_lp(rng)
    lps = [LpProblem(rng.integers(-4, 5, size=A_in.shape[1]).astype(float), A_eq, b_eq, A_in, b_in) for _ in range(4)]
    lps.append(LpProblem(*random_pointed_lp(rng)))
    for batch, single in zip(solve_all(lps), map(solve, lps)):
        assert batch.status == single.status
        if single.status == OPTIMAL:
            assert batch.value == pytest.approx(single.value, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=seeds)
def test_agrees_with_scipy(seed):
    linprog = pytest.importorskip("scipy.optimize").linprog
    c, A_eq, b_eq, A_in, b_in = random_pointed_lp(np.random.default_rng(seed))
    out = solve(LpProblem(c, A_eq, b_eq, A_in, b_in))
    ref = linprog(
        -c, A_ub=A_in, b_ub=b_in, A_eq=A_eq if A_eq.size else None, b_eq=b_eq if b_eq.size else None,
        bounds=[(None, None)] * c.shape[0], method="highs",
    )
    if ref.status == 0:
        assert out.status == OPTIMAL
        assert out.value == pytest.approx(-ref.fun, abs=1e-7 * (1 + abs(ref.fun)))
    else:
        # HiGHS presolve may call an unbounded problem infeasible, so only a finite optimum has to agree
        assert out.status != OPTIMAL, (ref.status, out)


def test_platoon_lps_feasible_points():
    for group in build_groups(build_platoon(PlatoonParams(M=2))):
        for lp, out in zip(group.lps, solve_all(group.lps)):
            assert out.status == OPTIMAL
            assert lp.max_violation(out.point) <= 1e-9


def test_to_text_listing():
    lp = LpProblem(np.array([1.0, 0.0]), np.array([[1.0, 1.0]]), np.array([2.0]), np.array([[1.0, 0.0]]), [1.0],
                   names=["a", "b"], offset=-1.5)
    text = lp.to_text()
    assert text.splitlines() == [
        "maximize",
        "  obj: +1 a -1.5",
        "subject to",
        "  e0: +1 a +1 b = 2",
        "  c0: +1 a <= 1",
        "bounds",
        "  a free",
        "  b free",
        "end",
    ]
