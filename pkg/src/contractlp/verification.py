"""Vertical-contract verification through linear programming.

For each node ``i`` one group of LPs asks whether the other contracts'
guarantees, together with the system-level assumptions, imply ``i``'s own
assumptions at the terminal time. One more group asks whether all component
guarantees imply the system-level guarantees. Each group yields a value
``rho``; the vertical contract holds when every ``rho`` is at most the
tolerance.

An LP maximizes a single affine row, so a block with ``r`` rows produces ``r``
LPs sharing one constraint set, and ``rho`` is the largest optimum. An
unbounded LP gives ``+inf``; an infeasible premise gives ``-inf`` (the
implication holds vacuously).
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .contracts import ASSUMPTION, GUARANTEE, VACUOUS, LtiRdContract, residual_at
from .network import CycleError, Finding, Network, find_cycle
from .simplex import OPTIMAL, UNBOUNDED, LpOutcome, LpProblem, solve_all

OMEGA = "Omega"
GENERAL = "general"
CASCADE = "cascade"
TWO_SYSTEM_FEEDBACK = "two_system_feedback"
MODES = (GENERAL, CASCADE, TWO_SYSTEM_FEEDBACK)

EXTERNAL = "__ext__"


class VerificationError(ValueError):
    """The problem does not meet a builder's preconditions."""

    def __init__(self, message: str, findings: Sequence[Finding] = ()):
        super().__init__(message)
        self.findings = list(findings)


@dataclass(frozen=True)
class VerificationOptions:
    tolerance: float = 1e-6
    mode: str = GENERAL
    horizon_extension: int = 0
    extendibility_asserted: bool = False
    strict: bool = False

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise VerificationError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.horizon_extension < 0:
            raise VerificationError("horizon_extension must be nonnegative")
        if not self.tolerance >= 0:
            raise VerificationError("tolerance must be nonnegative")


@dataclass(frozen=True, eq=False)
class VerificationProblem:
    network: Network
    c_tot: LtiRdContract
    options: VerificationOptions = VerificationOptions()

    def __post_init__(self) -> None:
        if self.c_tot.n_d != self.network.n_d_ext:
            raise VerificationError(
                f"system contract reads {self.c_tot.n_d} inputs but the network has {self.network.n_d_ext}"
            )
        if self.c_tot.n_y != self.network.n_y_ext:
            raise VerificationError(
                f"system contract reads {self.c_tot.n_y} outputs but the network has {self.network.n_y_ext}"
            )


# --------------------------------------------------------------------------- layout


@dataclass
class Witness:
    """Signals over times ``0..horizon``; arrays are ``(horizon + 1, dim)``."""

    d_ext: np.ndarray
    y_ext: np.ndarray
    d: dict[str, np.ndarray]
    y: dict[str, np.ndarray]

    @property
    def horizon(self) -> int:
        return self.d_ext.shape[0] - 1

    def to_dict(self) -> dict:
        return {
            "d_ext": self.d_ext.tolist(),
            "y_ext": self.y_ext.tolist(),
            "nodes": {k: {"d": self.d[k].tolist(), "y": self.y[k].tolist()} for k in self.d},
        }

    def copy(self) -> "Witness":
        return Witness(
            self.d_ext.copy(),
            self.y_ext.copy(),
            {k: v.copy() for k, v in self.d.items()},
            {k: v.copy() for k, v in self.y.items()},
        )


class VariableLayout:
    """Time-major variable order: per step ``d_ext, y_ext``, then ``d_j, y_j`` per node."""

    def __init__(self, network: Network, nodes: Sequence[str], horizon: int):
        keep = set(nodes)
        self.nodes = [n for n in network.node_ids if n in keep]
        self.horizon = horizon
        self.n_d_ext = network.n_d_ext
        self.n_y_ext = network.n_y_ext
        self._offset: dict[tuple[str, str], tuple[int, int]] = {}
        pos = 0
        for name, dim in (("d", self.n_d_ext), ("y", self.n_y_ext)):
            self._offset[(name, EXTERNAL)] = (pos, dim)
            pos += dim
        for node in self.nodes:
            contract = network.contract(node)
            for name, dim in (("d", contract.n_d), ("y", contract.n_y)):
                self._offset[(name, node)] = (pos, dim)
                pos += dim
        self.step = pos
        self.n_vars = pos * (horizon + 1)

    def index(self, signal: str, owner: str, t: int) -> np.ndarray:
        start, dim = self._offset[(signal, owner)]
        base = t * self.step + start
        return np.arange(base, base + dim)

    def window(self, signal: str, owner: str, t_lo: int, t_hi: int) -> np.ndarray:
        """Indices of times ``t_lo..t_hi`` inclusive, oldest first; empty when ``t_hi < t_lo``."""
        if t_hi < t_lo:
            return np.zeros(0, dtype=int)
        return np.concatenate([self.index(signal, owner, t) for t in range(t_lo, t_hi + 1)])

    def names(self) -> list[str]:
        out = [""] * self.n_vars
        for t in range(self.horizon + 1):
            for (signal, owner), (start, dim) in self._offset.items():
                label = f"{signal}_ext" if owner == EXTERNAL else f"{signal}_{owner}"
                for c in range(dim):
                    out[t * self.step + start + c] = f"{label}[{t}][{c}]"
        return out

    def decode(self, x: np.ndarray) -> Witness:
        steps = x.reshape(self.horizon + 1, self.step)

        def grab(signal: str, owner: str) -> np.ndarray:
            start, dim = self._offset[(signal, owner)]
            return steps[:, start : start + dim].copy()

        return Witness(
            grab("d", EXTERNAL),
            grab("y", EXTERNAL),
            {n: grab("d", n) for n in self.nodes},
            {n: grab("y", n) for n in self.nodes},
        )

    def encode(self, w: Witness) -> np.ndarray:
        steps = np.zeros((self.horizon + 1, self.step))
        for (signal, owner), (start, dim) in self._offset.items():
            if owner == EXTERNAL:
                src = w.d_ext if signal == "d" else w.y_ext
            else:
                src = (w.d if signal == "d" else w.y)[owner]
            steps[:, start : start + dim] = src
        return steps.reshape(-1)


# --------------------------------------------------------------------------- LP groups


@dataclass(frozen=True)
class Premise:
    """Blocks of ``kind`` of ``owner``'s contract enforced at times ``[block depth, until]``."""

    owner: str  # node id or OMEGA for the system contract
    kind: str
    until: int


@dataclass(frozen=True)
class ObjectiveRef:
    owner: str
    kind: str
    block: int
    row: int
    time: int


@dataclass
class LpGroup:
    target: str
    layout: VariableLayout
    lps: list[LpProblem]
    objectives: list[ObjectiveRef]
    premises: list[Premise]
    consistency_nodes: list[str]

    @property
    def horizon(self) -> int:
        return self.layout.horizon


def _owner_contract(problem: VerificationProblem, owner: str) -> LtiRdContract:
    return problem.c_tot if owner == OMEGA else problem.network.contract(owner)


def _signals(owner: str) -> str:
    return EXTERNAL if owner == OMEGA else owner


def _block_row_matrix(layout: VariableLayout, block, owner: str, ell: int) -> np.ndarray:
    """Rows of ``block`` at terminal time ``ell`` as dense coefficient rows over the layout."""
    sig = _signals(owner)
    out = np.zeros((block.n_rows, layout.n_vars))
    d_idx = layout.window("d", sig, ell - block.depth, ell)
    out[:, d_idx] += block.coeff_d
    if block.y_slots:
        y_idx = layout.window("y", sig, ell - block.depth, ell - block.depth + block.y_slots - 1)
        out[:, y_idx] += block.coeff_y
    return out


def _premise_rows(problem: VerificationProblem, layout: VariableLayout, premises: Sequence[Premise]):
    rows, rhs = [], []
    for prem in premises:
        contract = _owner_contract(problem, prem.owner)
        for block in contract.blocks(prem.kind):
            if not block.n_rows:
                continue
            for ell in range(block.depth, prem.until + 1):
                rows.append(_block_row_matrix(layout, block, prem.owner, ell))
                rhs.append(block.rhs)
    if not rows:
        return np.zeros((0, layout.n_vars)), np.zeros(0)
    return np.vstack(rows), np.concatenate(rhs)


def _consistency_rows(network: Network, layout: VariableLayout, nodes: Sequence[str]):
    rows, horizon = [], layout.horizon
    for t in range(horizon + 1):
        for j in nodes:
            block = np.zeros((network.node(j).n_d, layout.n_vars))
            block[:, layout.index("d", j, t)] += np.eye(network.node(j).n_d)
            if network.n_d_ext:
                block[:, layout.index("d", EXTERNAL, t)] -= network.e(j)
            for src, dst in network.edges:
                if dst == j:
                    block[:, layout.index("y", src, t)] -= network.f(src, dst)
            rows.append(block)
        block = np.zeros((network.n_y_ext, layout.n_vars))
        block[:, layout.index("y", EXTERNAL, t)] += np.eye(network.n_y_ext)
        for w in network.output_set:
            block[:, layout.index("y", w, t)] -= network.h(w)
        rows.append(block)
    mat = np.vstack(rows)
    return mat, np.zeros(mat.shape[0])


def _make_group(
    problem: VerificationProblem,
    target: str,
    var_nodes: Sequence[str],
    consistency_nodes: Sequence[str],
    horizon: int,
    premises: list[Premise],
    objective_owner: str,
    objective_kind: str,
    objective_times,
) -> LpGroup:
    network = problem.network
    layout = VariableLayout(network, var_nodes, horizon)
    eq_lhs, eq_rhs = _consistency_rows(network, layout, [n for n in layout.nodes if n in set(consistency_nodes)])
    in_lhs, in_rhs = _premise_rows(problem, layout, premises)
    for arr in (eq_lhs, eq_rhs, in_lhs, in_rhs):
        arr.setflags(write=False)
    names = layout.names()
    contract = _owner_contract(problem, objective_owner)
    lps, refs = [], []
    for b_idx, block in enumerate(contract.blocks(objective_kind)):
        for ell in objective_times(block):
            if ell < block.depth:
                continue
            mat = _block_row_matrix(layout, block, objective_owner, ell)
            for r in range(block.n_rows):
                lps.append(LpProblem(mat[r], eq_lhs, eq_rhs, in_lhs, in_rhs, names, offset=-float(block.rhs[r])))
                refs.append(ObjectiveRef(objective_owner, objective_kind, b_idx, r, ell))
    return LpGroup(target, layout, lps, refs, premises, list(consistency_nodes))


def _require_mode(problem: VerificationProblem) -> None:
    network = problem.network
    if problem.options.mode == CASCADE:
        cycle = find_cycle(network.node_ids, network.edges)
        if cycle is not None:
            raise VerificationError(
                "cascade mode needs an acyclic network", [Finding("cycle", "graph has a cycle", cycle=tuple(cycle))]
            )


def build_assumption_group(problem: VerificationProblem, node: str) -> LpGroup:
    network = problem.network
    contract = network.contract(node)
    horizon = contract.assumption_depth + problem.options.horizon_extension
    br = network.backward_reachable(node)
    br_nsc = network.backward_reachable(node, nsc_only=True)
    cascade = problem.options.mode == CASCADE
    premises = [Premise(OMEGA, ASSUMPTION, horizon)]
    for j in network.node_ids:
        if j not in br:
            continue
        full = cascade or j in br_nsc
        premises.append(Premise(j, GUARANTEE, horizon if full else horizon - 1))
    br_plus = br | {node}
    var_nodes = [n for n in network.node_ids if n in br_plus or n in network.output_set]
    return _make_group(
        problem, node, var_nodes, [n for n in network.node_ids if n in br_plus], horizon, premises,
        node, ASSUMPTION, lambda block: [horizon],
    )


def build_guarantee_group(problem: VerificationProblem) -> LpGroup:
    network = problem.network
    horizon = problem.c_tot.guarantee_depth + problem.options.horizon_extension
    premises = [Premise(OMEGA, ASSUMPTION, horizon)] + [Premise(j, GUARANTEE, horizon) for j in network.node_ids]
    return _make_group(
        problem, OMEGA, network.node_ids, network.node_ids, horizon, premises,
        OMEGA, GUARANTEE, lambda block: [horizon],
    )


def build_assumption_lps(problem: VerificationProblem, node: str) -> list[LpProblem]:
    """One LP per assumption row of ``node`` at its terminal time."""
    _require_mode(problem)
    return build_assumption_group(problem, node).lps


def build_guarantee_lps(problem: VerificationProblem) -> list[LpProblem]:
    """One LP per guarantee row of the system contract at its terminal time."""
    _require_mode(problem)
    return build_guarantee_group(problem).lps


def plant_and_controller(network: Network) -> tuple[str, str]:
    """Identify the two nodes of a feedback pair; the plant's incoming edge is strict."""
    if len(network.nodes) != 2:
        raise VerificationError("two-system feedback needs exactly two nodes")
    a, b = network.node_ids
    if set(network.edges) != {(a, b), (b, a)}:
        raise VerificationError("two-system feedback needs edges in both directions")
    causality = network.causality
    if causality[(b, a)] == "strict":
        return a, b
    if causality[(a, b)] == "strict":
        return b, a
    raise VerificationError("two-system feedback needs a strictly causal edge into the plant")


def build_two_system_feedback_groups(problem: VerificationProblem, horizon: int) -> list[LpGroup]:
    network = problem.network
    plant, ctrl = plant_and_controller(network)
    depth = max(
        problem.c_tot.assumption_depth,
        problem.c_tot.guarantee_depth,
        *(network.contract(n).assumption_depth for n in (plant, ctrl)),
        *(network.contract(n).guarantee_depth for n in (plant, ctrl)),
    )
    if horizon < depth:
        raise VerificationError(f"horizon {horizon} is below the deepest contract window {depth}")
    nodes = network.node_ids
    every = lambda block: range(block.depth, horizon + 1)  # noqa: E731
    plans = [
        (plant, {plant: horizon - 1, ctrl: horizon - 1}),
        (ctrl, {plant: horizon, ctrl: horizon - 1}),
        (OMEGA, {plant: horizon, ctrl: horizon}),
    ]
    groups = []
    for target, until in plans:
        premises = [Premise(OMEGA, ASSUMPTION, horizon)] + [Premise(n, GUARANTEE, until[n]) for n in nodes]
        kind = GUARANTEE if target == OMEGA else ASSUMPTION
        groups.append(_make_group(problem, target, nodes, nodes, horizon, premises, target, kind, every))
    return groups


def build_two_system_feedback_lps(problem: VerificationProblem, horizon: int) -> list[LpProblem]:
    """LPs of the plant, controller and system groups, concatenated in that order."""
    return [lp for g in build_two_system_feedback_groups(problem, horizon) for lp in g.lps]


def two_system_horizon(problem: VerificationProblem) -> int:
    network = problem.network
    depths = [problem.c_tot.assumption_depth, problem.c_tot.guarantee_depth]
    for n in network.nodes:
        depths += [n.contract.assumption_depth, n.contract.guarantee_depth]
    return max(depths) + problem.options.horizon_extension


# --------------------------------------------------------------------------- results


@dataclass
class RhoResult:
    target: str
    value: float
    witness: Witness | None = None
    lp_count: int = 0
    solve_time: float = 0.0
    stats: dict = field(default_factory=dict)
    objective: ObjectiveRef | None = None
    group: LpGroup | None = field(default=None, repr=False)

    @property
    def status(self) -> str:
        if self.value == math.inf:
            return "unbounded"
        if self.value == -math.inf:
            return "vacuous"
        return "finite"

    def passes(self, tolerance: float) -> bool:
        return self.value <= tolerance

    def to_dict(self, tolerance: float) -> dict:
        out = {
            "target": self.target,
            "rho": _fmt(self.value),
            "status": self.status,
            "pass": self.passes(tolerance),
            "lp_count": self.lp_count,
            "time_ms": self.solve_time * 1e3,
            "stats": self.stats,
        }
        if self.objective is not None:
            out["objective"] = {
                "owner": self.objective.owner,
                "kind": self.objective.kind,
                "block": self.objective.block,
                "row": self.objective.row,
                "time": self.objective.time,
            }
        if self.witness is not None:
            out["witness"] = self.witness.to_dict()
        return out


def _fmt(value: float):
    if value == math.inf:
        return "+inf"
    if value == -math.inf:
        return "-inf"
    return float(value)


def _group_stats(lps: Sequence[LpProblem]) -> dict:
    if not lps:
        return {"vars": 0, "eq_rows": 0, "ineq_rows": 0}
    return {
        "vars": float(np.mean([lp.n_vars for lp in lps])),
        "eq_rows": float(np.mean([lp.eq_lhs.shape[0] for lp in lps])),
        "ineq_rows": float(np.mean([lp.ineq_lhs.shape[0] for lp in lps])),
    }


def compute_rho(
    lps: Sequence[LpProblem],
    target: str = "",
    layout: VariableLayout | None = None,
    objectives: Sequence[ObjectiveRef] | None = None,
    outcomes: Sequence[LpOutcome] | None = None,
) -> RhoResult:
    """Aggregate LP outcomes: unbounded dominates, then the best optimum, else ``-inf``."""
    start = time.perf_counter()
    if outcomes is None:
        outcomes = solve_all(lps)
    elapsed = time.perf_counter() - start
    value, best = VACUOUS, None
    for k, outcome in enumerate(outcomes):
        if outcome.status == UNBOUNDED:
            value, best = math.inf, None
            break
        if outcome.status == OPTIMAL and (best is None or outcome.value > value):
            value, best = outcome.value, k
    witness = None
    ref = None
    if best is not None:
        ref = objectives[best] if objectives is not None else None
        if layout is not None:
            witness = layout.decode(outcomes[best].point)
    return RhoResult(target, value, witness, len(lps), elapsed, _group_stats(lps), ref)


def solve_group(group: LpGroup) -> RhoResult:
    result = compute_rho(group.lps, group.target, group.layout, group.objectives)
    result.group = group
    result.stats["horizon"] = group.horizon
    return result


# --------------------------------------------------------------------------- witness check


def _signal(w: Witness, signal: str, owner: str) -> np.ndarray:
    if owner == OMEGA:
        return w.d_ext if signal == "d" else w.y_ext
    return (w.d if signal == "d" else w.y)[owner]


def validate_witness(problem: VerificationProblem, rho: RhoResult, tol: float = 1e-6) -> bool:
    """Re-check a finite witness against its LP group's premises and objective."""
    if rho.witness is None or rho.group is None or rho.objective is None or not math.isfinite(rho.value):
        return False
    w, group, network = rho.witness, rho.group, problem.network
    horizon = group.horizon
    # premises, evaluated with the contract functions
    for prem in group.premises:
        contract = _owner_contract(problem, prem.owner)
        d, y = _signal(w, "d", prem.owner), _signal(w, "y", prem.owner)
        for t in range(0, prem.until + 1):
            if residual_at(contract, prem.kind, d, y, t) > tol:
                return False
    # interconnection and output consistency
    scale = tol * (1.0 + max(float(np.max(np.abs(w.d_ext), initial=0.0)), float(np.max(np.abs(w.y_ext)))))
    for t in range(horizon + 1):
        for j in group.consistency_nodes:
            expected = network.e(j) @ w.d_ext[t] if network.n_d_ext else np.zeros(network.node(j).n_d)
            for src, dst in network.edges:
                if dst == j:
                    expected = expected + network.f(src, dst) @ w.y[src][t]
            if np.max(np.abs(w.d[j][t] - expected)) > scale:
                return False
        y_ext = sum((network.h(n) @ w.y[n][t] for n in network.output_set), np.zeros(network.n_y_ext))
        if np.max(np.abs(w.y_ext[t] - y_ext)) > scale:
            return False
    # the objective row reproduces rho
    ref = rho.objective
    contract = _owner_contract(problem, ref.owner)
    block = contract.blocks(ref.kind)[ref.block]
    d, y = _signal(w, "d", ref.owner), _signal(w, "y", ref.owner)
    lo = ref.time - block.depth
    y_hi = ref.time if ref.kind == ASSUMPTION else ref.time + 1
    value = float(block.residuals(d[lo : ref.time + 1], y[lo:y_hi])[ref.row])
    return abs(value - rho.value) <= 1e-6 * (1.0 + abs(rho.value))


# --------------------------------------------------------------------------- driver


@dataclass
class Report:
    results: list[RhoResult]
    verdict: bool
    total_time: float
    tolerance: float
    mode: str
    findings: list[Finding] = field(default_factory=list)
    extendibility_asserted: bool = False

    @property
    def lp_groups(self) -> int:
        return len(self.results)

    def result(self, target: str) -> RhoResult:
        for r in self.results:
            if r.target == target:
                return r
        raise KeyError(target)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "mode": self.mode,
            "tolerance": self.tolerance,
            "lp_groups": self.lp_groups,
            "total_time_ms": self.total_time * 1e3,
            "extendibility_asserted": self.extendibility_asserted,
            "findings": [f.to_dict() for f in self.findings],
            "results": [r.to_dict(self.tolerance) for r in self.results],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def summary(self) -> str:
        lines = [f"{'target':<16} {'rho':>24} {'status':<10} {'LPs':>5} {'time ms':>10}"]
        for r in self.results:
            flag = "pass" if r.passes(self.tolerance) else "FAIL"
            lines.append(
                f"{r.target:<16} {str(_fmt(r.value)):>24} {flag:<10} {r.lp_count:>5} {r.solve_time * 1e3:>10.1f}"
            )
        lines.append(f"verdict: {'true' if self.verdict else 'false'} ({self.lp_groups} LP groups)")
        return "\n".join(lines)


def build_groups(problem: VerificationProblem) -> list[LpGroup]:
    """All LP groups of the configured mode, without solving them."""
    network = problem.network
    mode = problem.options.mode
    if mode == TWO_SYSTEM_FEEDBACK:
        return build_two_system_feedback_groups(problem, two_system_horizon(problem))
    _require_mode(problem)
    groups = [build_assumption_group(problem, n) for n in network.node_ids]
    groups.append(build_guarantee_group(problem))
    return groups


def preflight(problem: VerificationProblem) -> list[Finding]:
    """Structural findings; raises when an algebraic loop makes the LPs meaningless."""
    findings = problem.network.check_assumptions()
    fatal = [f for f in findings if f.kind == "algebraic_loop"]
    if problem.options.strict:
        fatal = findings
    if fatal:
        raise VerificationError("; ".join(f.message for f in fatal), fatal)
    return findings


def verify(problem: VerificationProblem, workers: int = 1) -> Report:
    """Build and solve every LP group; the verdict holds iff every rho is at most the tolerance."""
    start = time.perf_counter()
    findings = preflight(problem)
    groups = build_groups(problem)
    if workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve_group, groups))
    else:
        results = [solve_group(g) for g in groups]
    tol = problem.options.tolerance
    verdict = all(r.passes(tol) for r in results)
    return Report(
        results,
        verdict,
        time.perf_counter() - start,
        tol,
        problem.options.mode,
        findings,
        problem.options.extendibility_asserted,
    )


__all__ = [
    "CASCADE",
    "GENERAL",
    "OMEGA",
    "TWO_SYSTEM_FEEDBACK",
    "CycleError",
    "LpGroup",
    "ObjectiveRef",
    "Premise",
    "Report",
    "RhoResult",
    "VariableLayout",
    "VerificationError",
    "VerificationOptions",
    "VerificationProblem",
    "Witness",
    "build_assumption_lps",
    "build_guarantee_lps",
    "build_two_system_feedback_lps",
    "compute_rho",
    "validate_witness",
    "verify",
]
