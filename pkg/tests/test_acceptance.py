"""Acceptance criteria 1-9, one test per criterion; tolerances are pinned here."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from contractlp.contracts import eval_gamma, first_violation, is_srd
from contractlp.network import backward_reachable, count_topological_orders, is_topological_order, topological_order
from contractlp.platoon import (
    PlatoonParams,
    build_network,
    build_platoon,
    check_trajectory_guarantees,
    physical_contract,
    simulate,
)
from contractlp.simplex import LpProblem, solve
from contractlp.verification import (
    OMEGA,
    VerificationOptions,
    VerificationProblem,
    build_two_system_feedback_groups,
    solve_group,
    two_system_horizon,
    validate_witness,
    verify,
)
from oracles import (
    SAMPLE_DAG_EDGES,
    SAMPLE_DAG_NODES,
    closure_oracle,
    random_digraph,
    random_feedback_pair,
    random_nsc_dag_problem,
    random_pointed_lp,
    sign_eps,
    vertex_oracle,
)

RHO_TOL = 1e-6
LP_VALUE_TOL = 1e-7
BUILDER_TOL = 1e-9
SIGN_EPS = 1e-6


def _report(number: int, passed: bool, text: str) -> None:
    print(f"[acceptance {number}] {'PASS' if passed else 'FAIL'}: {text}")


@pytest.mark.acceptance(1, "platoon M=2: verdict true, 3 LP groups, |rho| <= 1e-6, under 10 s")
def test_criterion_1_platoon_m2():
    start = time.perf_counter()
    report = verify(build_platoon(PlatoonParams(M=2)))
    elapsed = time.perf_counter() - start
    values = [r.value for r in report.results]
    ok = report.verdict and report.lp_groups == 3 and all(-RHO_TOL <= v <= RHO_TOL for v in values) and elapsed < 10
    _report(1, ok, f"rho={values} groups={report.lp_groups} time={elapsed:.2f}s")
    assert report.verdict
    assert report.lp_groups == 3
    assert all(-RHO_TOL <= v <= RHO_TOL for v in values), values
    assert elapsed < 10


@pytest.mark.acceptance(2, "LP groups {3,9,19,39} for M in {2,5,10,20}, verdict true, M=20 under 120 s")
def test_criterion_2_lp_count_scaling():
    counts, times = {}, {}
    for M in (2, 5, 10, 20):
        start = time.perf_counter()
        report = verify(build_platoon(PlatoonParams(M=M)))
        times[M] = time.perf_counter() - start
        assert report.verdict, M
        assert all(abs(r.value) <= RHO_TOL for r in report.results)
        counts[M] = report.lp_groups
    ok = counts == {2: 3, 5: 9, 10: 19, 20: 39} and times[20] < 120
    _report(2, ok, f"groups={counts} M=20 time={times[20]:.2f}s")
    assert counts == {2: 3, 5: 9, 10: 19, 20: 39}
    assert times[20] < 120


@pytest.mark.acceptance(3, "headway h'=2.5 vs h=2: verdict false, witness validates, eval_gamma(C_tot) > 0")
def test_criterion_3_mutation():
    problem = build_platoon(PlatoonParams(M=2), h_tot=2.5)
    report = verify(problem)
    omega = report.result(OMEGA)
    assert not report.verdict
    assert omega.value > RHO_TOL
    assert math.isfinite(omega.value)
    assert validate_witness(problem, omega)
    w = omega.witness
    gamma = eval_gamma(problem.c_tot, w.d_ext, w.y_ext)
    _report(3, gamma > 0, f"rho_Omega={omega.value} eval_gamma={gamma}")
    assert gamma > 0
    assert gamma == pytest.approx(omega.value, abs=RHO_TOL)


@pytest.mark.acceptance(4, "sample DAG: 11 orderings, BR(C)={A,B}, BR(F)={A,B,D,E}; closure oracle on 100 graphs")
def test_criterion_4_graph_fixtures():
    assert count_topological_orders(SAMPLE_DAG_NODES, SAMPLE_DAG_EDGES) == 11
    assert backward_reachable(SAMPLE_DAG_NODES, SAMPLE_DAG_EDGES, "C") == {"A", "B"}
    assert backward_reachable(SAMPLE_DAG_NODES, SAMPLE_DAG_EDGES, "F") == {"A", "B", "D", "E"}
    assert is_topological_order(topological_order(SAMPLE_DAG_NODES, SAMPLE_DAG_EDGES), SAMPLE_DAG_NODES, SAMPLE_DAG_EDGES)
    rng = np.random.default_rng(4)
    for _ in range(100):
        nodes, edges = random_digraph(rng)
        oracle = closure_oracle(nodes, edges)
        for node in nodes:
            assert backward_reachable(nodes, edges, node) == oracle[node]
        dag_nodes, dag_edges = random_digraph(rng, dag=True)
        assert is_topological_order(topological_order(dag_nodes, dag_edges), dag_nodes, dag_edges)
    _report(4, True, "fixtures and 100 random graphs agree")


@pytest.mark.acceptance(5, "simplex vs vertex oracle on 300 LPs: status equal, values within 1e-7, under 30 s")
def test_criterion_5_simplex_oracle():
    rng = np.random.default_rng(5)
    start = time.perf_counter()
    statuses = {"optimal": 0, "infeasible": 0, "unbounded": 0}
    for _ in range(300):
        c, A_eq, b_eq, A_in, b_in = random_pointed_lp(rng)
        expected, value = vertex_oracle(c, A_eq, b_eq, A_in, b_in)
        outcome = solve(LpProblem(c, A_eq, b_eq, A_in, b_in))
        assert outcome.status == expected
        if expected == "optimal":
            assert abs(outcome.value - value) <= LP_VALUE_TOL * (1 + abs(value))
        statuses[expected] += 1
    elapsed = time.perf_counter() - start
    _report(5, elapsed < 30, f"statuses={statuses} time={elapsed:.2f}s")
    assert all(statuses.values())
    assert elapsed < 30


@pytest.mark.acceptance(6, "cascade and general builders agree within 1e-9 on 50 all-non-strict DAGs")
def test_criterion_6_builder_equivalence():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        seed = int(rng.integers(1 << 31))
        general = verify(random_nsc_dag_problem(np.random.default_rng(seed), "general"))
        cascade = verify(random_nsc_dag_problem(np.random.default_rng(seed), "cascade"))
        for a, b in zip(general.results, cascade.results):
            assert a.target == b.target
            if math.isinf(a.value) or math.isinf(b.value):
                assert a.value == b.value
            else:
                worst = max(worst, abs(a.value - b.value))
    _report(6, worst <= BUILDER_TOL, f"max |diff| = {worst}")
    assert worst <= BUILDER_TOL


def _feedback_signs(problem: VerificationProblem) -> list[tuple[int, ...]]:
    base = problem.options
    signs = []
    for extra in range(3):
        options = VerificationOptions(mode="two_system_feedback", horizon_extension=base.horizon_extension + extra)
        p = VerificationProblem(problem.network, problem.c_tot, options)
        groups = build_two_system_feedback_groups(p, two_system_horizon(p))
        signs.append(tuple(sign_eps(solve_group(g).value, SIGN_EPS) for g in groups))
    return signs


@pytest.mark.acceptance(7, "two-system feedback: sign(rho) equal at m, m+1, m+2 (platoon M=2 and 20 random loops)")
def test_criterion_7_horizon_stability():
    platoon = build_platoon(PlatoonParams(M=2))
    signs = _feedback_signs(platoon)
    assert len(set(signs)) == 1, signs
    assert signs[0] == (0, 0, 0)
    rng = np.random.default_rng(7)
    for _ in range(20):
        signs = _feedback_signs(random_feedback_pair(rng))
        assert len(set(signs)) == 1, signs
    _report(7, True, "signs stable across three horizons")


@pytest.mark.acceptance(8, "50 seeded 300-step runs: headway and speed guarantees hold, no infeasible control")
def test_criterion_8_simulation():
    params = PlatoonParams(M=2)
    for seed in range(50):
        traj = simulate(params, 300, seed)
        ok, record = check_trajectory_guarantees(traj, params)
        assert ok, (seed, record)
        assert traj.infeasible_count == 0
        assert traj.steps == 300
    _report(8, True, "50/50 runs satisfy the system guarantees")


@pytest.mark.acceptance(9, "invariant suites: monotonicity, SRD composition, rho monotonicity, vacuity, self-refinement, witnesses")
def test_criterion_9_invariants():
    from test_contracts import monotone_membership_cases
    from test_verification import (
        assert_rho_monotone_under_strengthening,
        assert_self_refinement,
        assert_vacuity,
        assert_witnesses_certified,
    )

    rng = np.random.default_rng(9)
    for contract, d, y in monotone_membership_cases(rng, 20):
        hit = first_violation(contract, "assumption", d, y)
        for n in range(d.shape[0]):
            assert (first_violation(contract, "assumption", d[: n + 1], y[: n + 1]) is None) == (
                hit is None or hit[0] > n
            )
    phy = physical_contract(PlatoonParams(M=2), 2)
    for s1 in ({0}, {1}, {2}, set()):
        for s2 in ({0}, {2}, {1, 2}):
            assert is_srd(phy, s1 | s2) == (is_srd(phy, s1) and is_srd(phy, s2))
    for seed in range(10):
        assert_rho_monotone_under_strengthening(np.random.default_rng(seed))
        assert_self_refinement(np.random.default_rng(seed))
        assert_witnesses_certified(random_nsc_dag_problem(np.random.default_rng(seed)))
    assert_vacuity(build_network(PlatoonParams(M=3)))
    _report(9, True, "invariant spot checks green; full suites run in the module test files")
