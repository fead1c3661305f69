from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contractlp.contracts import (
    ASSUMPTION,
    GUARANTEE,
    VACUOUS,
    ContractError,
    InequalityBlock,
    LtiRdContract,
    check_assumption_prefix,
    check_guarantee_prefix,
    contract_from_terms,
    eval_alpha,
    eval_gamma,
    first_violation,
    is_srd,
    residual_at,
)
from contractlp.platoon import PlatoonParams, physical_contract, simulate, system_contract

seeds = st.integers(0, 2**32 - 1)


def random_contract(rng: np.random.Generator, n_blocks: int = 2) -> LtiRdContract:
    n_d, n_y = int(rng.integers(1, 4)), int(rng.integers(1, 3))

    def blocks(kind):
        out = []
        for _ in range(n_blocks):
            m = int(rng.integers(0 if kind == GUARANTEE else 0, 3))
            rows = int(rng.integers(1, 4))
            y_slots = m if kind == ASSUMPTION else m + 1
            out.append(
                InequalityBlock(
                    kind,
                    m,
                    rng.normal(size=(rows, (m + 1) * n_d)),
                    rng.normal(size=(rows, y_slots * n_y)),
                    rng.normal(size=rows),
                )
            )
        return tuple(out)

    return LtiRdContract(n_d, n_y, blocks(ASSUMPTION), blocks(GUARANTEE))


def windows(rng, contract: LtiRdContract, kind: str, extra: int = 0):
    depth = contract.assumption_depth if kind == ASSUMPTION else contract.guarantee_depth
    steps = depth + 1 + extra
    d = rng.normal(size=(steps, contract.n_d))
    y = rng.normal(size=(steps - 1 if kind == ASSUMPTION else steps, contract.n_y))
    return d, y


def monotone_membership_cases(rng: np.random.Generator, count: int):
    """Contracts with bounded signals that eventually leave the assumption set."""
    for _ in range(count):
        contract = random_contract(rng)
        n = int(rng.integers(3, 12))
        d = rng.normal(size=(n, contract.n_d)) * rng.uniform(0.1, 3)
        y = rng.normal(size=(n, contract.n_y))
        yield contract, d, y


# --------------------------------------------------------------------------- examples


def scalar(kind, depth, coeff_d, coeff_y, rhs):
    return InequalityBlock(kind, depth, np.atleast_2d(coeff_d), np.array(coeff_y, dtype=float).reshape(len(rhs), -1), rhs)


def test_eval_alpha_examples():
    one_row = LtiRdContract(1, 1, (scalar(ASSUMPTION, 0, [[1.0]], [[]], [1.0]),))
    assert eval_alpha(one_row, [[0.4]], np.zeros((0, 1))) == pytest.approx(-0.6)
    zero = LtiRdContract(1, 1, (scalar(ASSUMPTION, 1, [[0.0, 0.0]], [[0.0]], [0.0]),))
    assert eval_alpha(zero, [[3.0], [-2.0]], [[5.0]]) == 0.0
    two = LtiRdContract(
        1,
        1,
        (scalar(ASSUMPTION, 0, [[1.0]], [[]], [2.0]), scalar(ASSUMPTION, 0, [[-1.0]], [[]], [3.0])),
    )
    assert eval_alpha(two, [[5.0]], np.zeros((0, 1))) == pytest.approx(3.0)


def test_eval_gamma_examples():
    c = contract_from_terms(1, 1, guarantees=[(0, [({("y", 0, 0): 1.0, ("d", 0, 0): -2.0}, 0.0)])])
    assert eval_gamma(c, [[1.0], [1.0]], [[0.0], [1.5]]) == pytest.approx(-0.5)
    eq = contract_from_terms(
        1, 1, guarantees=[(0, [({("y", 0, 0): 1, ("d", 0, 0): -1}, 0.0), ({("y", 0, 0): -1, ("d", 0, 0): 1}, 0.0)])]
    )
    assert eval_gamma(eq, [[0.0], [7.0]], [[0.0], [7.0]]) == 0.0
    lag = contract_from_terms(1, 1, guarantees=[(1, [({("y", 0, 0): 1, ("d", 1, 0): -1}, 0.0), ({("y", 0, 0): -1}, 0.0)])])
    assert eval_gamma(lag, [[1.0], [0.0]], [[0.0], [3.0]]) == pytest.approx(2.0)


def test_vacuous_assumptions_are_minus_infinity():
    c = contract_from_terms(1, 1, guarantees=[(0, [({("y", 0, 0): 1.0}, 1.0)])])
    value = eval_alpha(c, [[0.0], [0.0]], [[0.0]])
    assert value == VACUOUS and math.isinf(value) and value < 0


def test_missing_guarantee_becomes_zero_row_block():
    c = LtiRdContract(2, 1)
    assert len(c.guarantees) == 1 and c.guarantees[0].n_rows == 0
    assert c.assumption_depth == 1 and c.guarantee_depth == 1


def test_dimension_errors():
    with pytest.raises(ContractError):
        InequalityBlock(ASSUMPTION, 1, np.zeros((1, 3)), np.zeros((1, 1)), [0.0])
    with pytest.raises(ContractError):
        InequalityBlock(GUARANTEE, 1, np.zeros((2, 2)), np.zeros((1, 2)), [0.0])
    c = contract_from_terms(2, 1, guarantees=[(1, [({("y", 0, 0): 1.0}, 0.0)])])
    with pytest.raises(ContractError):
        eval_gamma(c, np.zeros((2, 3)), np.zeros((2, 1)))
    with pytest.raises(ContractError):
        eval_gamma(c, np.zeros((2, 2)), np.zeros((1, 1)))
    with pytest.raises(ContractError):
        check_guarantee_prefix(c, np.zeros((4, 2)), np.zeros((3, 1)))
    with pytest.raises(ContractError):
        contract_from_terms(1, 1, assumptions=[(1, [({("y", 0, 0): 1.0}, 0.0)])])


def test_prefix_examples():
    vmax = 30.0
    leader = contract_from_terms(1, 1, assumptions=[(0, [({("d", 0, 0): 1.0}, vmax), ({("d", 0, 0): -1.0}, 0.0)])])
    v = np.full((10, 1), vmax / 2)
    assert check_assumption_prefix(leader, v, np.zeros((10, 1)))
    v[4] = 2 * vmax
    assert not check_assumption_prefix(leader, v, np.zeros((10, 1)))
    ident = contract_from_terms(
        1, 1, guarantees=[(0, [({("y", 0, 0): 1, ("d", 0, 0): -1}, 0.0), ({("y", 0, 0): -1, ("d", 0, 0): 1}, 0.0)])]
    )
    s = np.arange(8.0).reshape(-1, 1)
    assert check_guarantee_prefix(ident, s, s.copy())
    bad = s.copy()
    bad[5] += 1
    assert not check_guarantee_prefix(ident, s, bad)
    assert first_violation(ident, GUARANTEE, s, bad)[0] == 5


def test_platoon_traces_against_system_contract():
    params = PlatoonParams(M=2)
    traj = simulate(params, 300, seed=3)
    d, y = traj.system_signals()
    c_tot = system_contract(params)
    assert check_assumption_prefix(c_tot, d, y)
    assert check_guarantee_prefix(c_tot, d, y)


def test_is_srd_examples():
    delay = contract_from_terms(
        1, 1, guarantees=[(1, [({("y", 0, 0): 1, ("y", 1, 0): -1, ("d", 1, 0): -1}, 0.0)])]
    )
    assert is_srd(delay, {0})
    feed = contract_from_terms(1, 1, guarantees=[(0, [({("y", 0, 0): 1, ("d", 0, 0): -1}, 0.0)])])
    assert not is_srd(feed, {0})
    phy = physical_contract(PlatoonParams(M=2), 2)
    assert is_srd(phy, {2})
    assert not is_srd(phy, {0})
    with pytest.raises(ContractError):
        is_srd(phy, {3})


# --------------------------------------------------------------------------- properties


@settings(max_examples=60, deadline=None)
@given(seed=seeds, scale=st.floats(0.01, 100.0))
def test_positive_homogeneity(seed, scale):
    rng = np.random.default_rng(seed)
    c = random_contract(rng)
    scaled = LtiRdContract(
        c.n_d, c.n_y, tuple(b.scaled(scale) for b in c.assumptions), tuple(b.scaled(scale) for b in c.guarantees)
    )
    d, y = windows(rng, c, ASSUMPTION)
    assert eval_alpha(scaled, d, y) == pytest.approx(scale * eval_alpha(c, d, y), rel=1e-9, abs=1e-9)
    d, y = windows(rng, c, GUARANTEE)
    assert eval_gamma(scaled, d, y) == pytest.approx(scale * eval_gamma(c, d, y), rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=seeds)
def test_membership_monotone_in_prefix_length(seed):
    rng = np.random.default_rng(seed)
    for contract, d, y in monotone_membership_cases(rng, 1):
        for kind, check in ((ASSUMPTION, check_assumption_prefix), (GUARANTEE, check_guarantee_prefix)):
            full = check(contract, d, y)
            if full:
                for n in range(d.shape[0]):
                    assert check(contract, d[: n + 1], y[: n + 1])


@settings(max_examples=60, deadline=None)
@given(seed=seeds)
def test_block_splitting_equivalence(seed):
    rng = np.random.default_rng(seed)
    c = random_contract(rng, n_blocks=1)

    def split(blocks):
        return tuple(
            InequalityBlock(b.kind, b.depth, b.coeff_d[r : r + 1], b.coeff_y[r : r + 1], b.rhs[r : r + 1])
            for b in blocks
            for r in range(b.n_rows)
        )

    s = LtiRdContract(c.n_d, c.n_y, split(c.assumptions), split(c.guarantees))
    d, y = windows(rng, c, ASSUMPTION, extra=1)
    assert eval_alpha(s, d, y) == pytest.approx(eval_alpha(c, d, y), rel=1e-12, abs=1e-12)
    d, y = windows(rng, c, GUARANTEE, extra=1)
    assert eval_gamma(s, d, y) == pytest.approx(eval_gamma(c, d, y), rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=seeds, extra=st.integers(1, 3))
def test_depth_embedding_preserves_values(seed, extra):
    rng = np.random.default_rng(seed)
    c = random_contract(rng)
    deeper = LtiRdContract(
        c.n_d,
        c.n_y,
        tuple(b.embed(b.depth + extra, c.n_y) for b in c.assumptions),
        tuple(b.embed(b.depth + extra, c.n_y) for b in c.guarantees),
    )
    d, y = windows(rng, deeper, ASSUMPTION)
    assert eval_alpha(deeper, d, y) == pytest.approx(eval_alpha(c, d, y), abs=1e-12)
    d, y = windows(rng, deeper, GUARANTEE)
    assert eval_gamma(deeper, d, y) == pytest.approx(eval_gamma(c, d, y), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=seeds, data=st.data())
def test_srd_composes_over_unions(seed, data):
    rng = np.random.default_rng(seed)
    c = random_contract(rng)
    # zero out some current-time columns so both answers occur
    blocks = []
    for b in c.guarantees:
        cd = b.coeff_d.copy()
        for j in range(c.n_d):
            if rng.random() < 0.5:
                cd[:, b.depth * c.n_d + j] = 0.0
        blocks.append(InequalityBlock(b.kind, b.depth, cd, b.coeff_y, b.rhs))
    c = LtiRdContract(c.n_d, c.n_y, c.assumptions, tuple(blocks))
    coords = st.sets(st.integers(0, c.n_d - 1))
    s1, s2 = data.draw(coords), data.draw(coords)
    assert is_srd(c, s1 | s2) == (is_srd(c, s1) and is_srd(c, s2))


@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_residual_at_matches_eval_past_the_depth(seed):
    rng = np.random.default_rng(seed)
    c = random_contract(rng)
    n = c.guarantee_depth + 3
    d = rng.normal(size=(n, c.n_d))
    y = rng.normal(size=(n, c.n_y))
    t = n - 1
    lo = t - c.guarantee_depth
    assert residual_at(c, GUARANTEE, d, y, t) == pytest.approx(eval_gamma(c, d[lo:], y[lo:]))
    lo = t - c.assumption_depth
    assert residual_at(c, ASSUMPTION, d, y, t) == pytest.approx(eval_alpha(c, d[lo:], y[lo:t]))
