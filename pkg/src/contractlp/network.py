"""Interconnections of contract-bearing nodes.

Every node ``i`` carries an :class:`~contractlp.contracts.LtiRdContract`. Its
input is wired as::

    d_i(k) = sum_j F[j -> i] y_j(k) + E_i d_ext(k)

and the external output is ``y_ext(k) = sum_{i in W} H_i y_i(k)``. The external
input ``d_ext`` is shared by the whole network; ``E_i`` selects the part node
``i`` sees.
"""

from __future__ import annotations

import re
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .contracts import LtiRdContract

STRICT = "strict"
NONSTRICT = "nonstrict"

Edge = tuple[str, str]


class NetworkError(ValueError):
    """Malformed wiring, unknown nodes, or dimension mismatch."""


class CycleError(NetworkError):
    """Raised when an ordering is requested for a cyclic graph."""

    def __init__(self, cycle: list[Edge]):
        self.cycle = cycle
        text = ", ".join(f"{a}->{b}" for a, b in cycle)
        super().__init__(f"graph has a cycle: {text}")


# --------------------------------------------------------------------------- graph helpers


def _adjacency(nodes: Sequence[Hashable], edges: Iterable[tuple]) -> dict:
    succ: dict = {n: [] for n in nodes}
    for a, b in edges:
        if a not in succ or b not in succ:
            raise NetworkError(f"edge {a}->{b} references an unknown node")
        if b not in succ[a]:
            succ[a].append(b)
    index = {n: k for k, n in enumerate(nodes)}
    for n in succ:
        succ[n].sort(key=index.__getitem__)
    return succ


def find_cycle(nodes: Sequence[Hashable], edges: Iterable[tuple]) -> list[tuple] | None:
    """A directed cycle as a list of edges, or ``None`` for a DAG."""
    succ = _adjacency(nodes, edges)
    color = {n: 0 for n in nodes}
    for root in nodes:
        if color[root]:
            continue
        stack = [(root, iter(succ[root]))]
        path = [root]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
                path.pop()
            elif color[nxt] == 1:
                loop = path[path.index(nxt) :] + [nxt]
                return list(zip(loop[:-1], loop[1:]))
            elif color[nxt] == 0:
                color[nxt] = 1
                stack.append((nxt, iter(succ[nxt])))
                path.append(nxt)
    return None


def topological_order(nodes: Sequence[Hashable], edges: Iterable[tuple]) -> list:
    """DFS topological ordering with node-index tie-breaking.

    Roots are visited in declaration order and successors in declaration order;
    the result is the reversed postorder. Raises :class:`CycleError` otherwise.
    """
    edges = list(edges)
    cycle = find_cycle(nodes, edges)
    if cycle is not None:
        raise CycleError(cycle)
    succ = _adjacency(nodes, edges)
    seen: set = set()
    post: list = []
    for root in reversed(nodes):
        if root in seen:
            continue
        seen.add(root)
        stack = [(root, iter(reversed(succ[root])))]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                post.append(node)
                stack.pop()
            elif nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, iter(reversed(succ[nxt]))))
    return post[::-1]


def is_topological_order(order: Sequence[Hashable], nodes: Sequence[Hashable], edges: Iterable[tuple]) -> bool:
    if sorted(map(str, order)) != sorted(map(str, nodes)) or len(set(order)) != len(order):
        return False
    pos = {n: k for k, n in enumerate(order)}
    return all(pos[a] < pos[b] for a, b in edges)


def count_topological_orders(nodes: Sequence[Hashable], edges: Iterable[tuple], limit: int = 12) -> int:
    """Exact number of topological orderings (0 for a cyclic graph).

    Exponential in the node count; refuses graphs above ``limit`` nodes.
    """
    n = len(nodes)
    if n > limit:
        raise NetworkError(f"{n} nodes exceed the enumeration bound of {limit}")
    index = {v: k for k, v in enumerate(nodes)}
    preds = [0] * n
    for a, b in edges:
        preds[index[b]] |= 1 << index[a]
    ways = [0] * (1 << n)
    ways[0] = 1
    for mask in range(1 << n):
        if not ways[mask]:
            continue
        for v in range(n):
            bit = 1 << v
            if not mask & bit and preds[v] & mask == preds[v]:
                ways[mask | bit] += ways[mask]
    return ways[(1 << n) - 1]


def backward_reachable(nodes: Sequence[Hashable], edges: Iterable[tuple], target: Hashable) -> set:
    """Nodes with a directed path of length at least one into ``target``.

    ``target`` itself belongs to the set exactly when it lies on a cycle.
    """
    pred: dict = {n: [] for n in nodes}
    for a, b in edges:
        pred[b].append(a)
    if target not in pred:
        raise NetworkError(f"unknown node {target!r}")
    found: set = set()
    frontier = list(pred[target])
    while frontier:
        node = frontier.pop()
        if node in found:
            continue
        found.add(node)
        frontier.extend(pred[node])
    return found


# --------------------------------------------------------------------------- network


@dataclass(frozen=True)
class Node:
    id: str
    contract: LtiRdContract

    @property
    def n_d(self) -> int:
        return self.contract.n_d

    @property
    def n_y(self) -> int:
        return self.contract.n_y


@dataclass(frozen=True)
class Finding:
    """A structural warning; ``kind`` is ``"output_dependent_assumption"`` or ``"algebraic_loop"``."""

    kind: str
    message: str
    node: str | None = None
    cycle: tuple[Edge, ...] = ()

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "message": self.message}
        if self.node is not None:
            out["node"] = self.node
        if self.cycle:
            out["cycle"] = [list(e) for e in self.cycle]
        return out


def _as_matrix(value, shape: tuple[int, int], what: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.size == 0 and 0 in shape:
        arr = arr.reshape(shape)
    if arr.shape != shape:
        raise NetworkError(f"{what} has shape {arr.shape}, expected {shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Network:
    """Validated, immutable interconnection.

    ``F`` maps an edge ``(src, dst)`` to an ``n_d[dst] x n_y[src]`` matrix,
    ``E`` maps a node to ``n_d[node] x n_d_ext`` and ``H`` maps a node of the
    output set to ``n_y_ext x n_y[node]``. Missing entries are zero.
    ``causality_overrides`` may only mark edges as non-strict.
    """

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    n_d_ext: int
    n_y_ext: int
    F: Mapping[Edge, np.ndarray] = field(default_factory=dict)
    E: Mapping[str, np.ndarray] = field(default_factory=dict)
    H: Mapping[str, np.ndarray] = field(default_factory=dict)
    output_set: frozenset[str] = frozenset()
    causality_overrides: Mapping[Edge, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        nodes = tuple(self.nodes)
        ids = [n.id for n in nodes]
        if not nodes:
            raise NetworkError("a network needs at least one node")
        if len(set(ids)) != len(ids):
            raise NetworkError("duplicate node ids")
        if self.n_d_ext < 0 or self.n_y_ext < 1:
            raise NetworkError("n_d_ext must be >= 0 and n_y_ext >= 1")
        by_id = {n.id: n for n in nodes}
        edges: list[Edge] = []
        for src, dst in self.edges:
            if src not in by_id or dst not in by_id:
                raise NetworkError(f"edge {src}->{dst} references an unknown node")
            if (src, dst) not in edges:
                edges.append((src, dst))
        output_set = frozenset(self.output_set)
        for node in output_set:
            if node not in by_id:
                raise NetworkError(f"output set names unknown node {node!r}")

        F: dict[Edge, np.ndarray] = {}
        for key, value in self.F.items():
            key = tuple(key)
            if key not in edges:
                raise NetworkError(f"F is given for {key[0]}->{key[1]}, which is not an edge")
            src, dst = key
            F[key] = _as_matrix(value, (by_id[dst].n_d, by_id[src].n_y), f"F[{src}->{dst}]")
        E: dict[str, np.ndarray] = {}
        for key, value in self.E.items():
            if key not in by_id:
                raise NetworkError(f"E is given for unknown node {key!r}")
            E[key] = _as_matrix(value, (by_id[key].n_d, self.n_d_ext), f"E[{key}]")
        H: dict[str, np.ndarray] = {}
        for key, value in self.H.items():
            if key not in by_id:
                raise NetworkError(f"H is given for unknown node {key!r}")
            mat = _as_matrix(value, (self.n_y_ext, by_id[key].n_y), f"H[{key}]")
            if key not in output_set and np.any(mat != 0):
                raise NetworkError(f"H[{key}] is nonzero but {key} is not in the output set")
            H[key] = mat

        for node in nodes:
            sourced = np.zeros(node.n_d, dtype=bool)
            if node.id in E:
                sourced |= np.any(E[node.id] != 0, axis=1)
            for (src, dst), mat in F.items():
                if dst == node.id:
                    sourced |= np.any(mat != 0, axis=1)
            if not sourced.all():
                missing = [int(c) for c in np.flatnonzero(~sourced)]
                raise NetworkError(f"input coordinates {missing} of node {node.id} are not wired")

        overrides: dict[Edge, str] = {}
        for key, label in self.causality_overrides.items():
            key = tuple(key)
            if key not in edges:
                raise NetworkError(f"causality override for {key[0]}->{key[1]}, which is not an edge")
            if label not in (STRICT, NONSTRICT):
                raise NetworkError(f"causality label must be {STRICT!r} or {NONSTRICT!r}, got {label!r}")
            overrides[key] = label

        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(edges))
        object.__setattr__(self, "output_set", output_set)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "causality_overrides", overrides)

        derived = self.derived_causality
        for key, label in overrides.items():
            if label == STRICT and derived[key] != STRICT:
                raise NetworkError(
                    f"edge {key[0]}->{key[1]} has direct feedthrough and cannot be declared strict"
                )

    # ---------------------------------------------------------------- construction

    @classmethod
    def from_sources(
        cls,
        nodes: Sequence[Node],
        inputs: Mapping[str, Sequence[str]],
        outputs: Sequence[str],
        n_d_ext: int | None = None,
        output_set: Iterable[str] | None = None,
        causality_overrides: Mapping[Edge, str] | None = None,
    ) -> "Network":
        """Selection-style wiring from ordered source lists.

        ``inputs[node]`` lists, per input coordinate, a source token ``"ext:k"``
        (external input coordinate ``k``) or ``"<node>:k"`` (output coordinate
        ``k`` of another node). ``outputs`` lists one ``"<node>:k"`` token per
        external output coordinate.
        """
        by_id = {n.id: n for n in nodes}
        tokens: list[tuple[str, str, int]] = []

        def parse(token: str) -> tuple[str, int]:
            match = re.fullmatch(r"(.+):(\d+)", token)
            if not match:
                raise NetworkError(f"bad source token {token!r}, expected '<node>:<index>' or 'ext:<index>'")
            return match.group(1), int(match.group(2))

        ext_max = -1
        for node_id, sources in inputs.items():
            if node_id not in by_id:
                raise NetworkError(f"inputs given for unknown node {node_id!r}")
            if len(sources) != by_id[node_id].n_d:
                raise NetworkError(
                    f"node {node_id} has {by_id[node_id].n_d} inputs but {len(sources)} sources"
                )
            for token in sources:
                src, k = parse(token)
                if src == "ext":
                    ext_max = max(ext_max, k)
                tokens.append((node_id, src, k))
        n_ext = ext_max + 1 if n_d_ext is None else n_d_ext
        F: dict[Edge, np.ndarray] = {}
        E: dict[str, np.ndarray] = {}
        edges: list[Edge] = []
        row_of: dict[str, int] = {}
        for node_id, src, k in tokens:
            row = row_of.get(node_id, 0)
            row_of[node_id] = row + 1
            if src == "ext":
                if k >= n_ext:
                    raise NetworkError(f"external index {k} out of range for {n_ext} external inputs")
                E.setdefault(node_id, np.zeros((by_id[node_id].n_d, n_ext)))[row, k] = 1.0
            else:
                if src not in by_id:
                    raise NetworkError(f"source {src!r} of node {node_id} is unknown")
                if k >= by_id[src].n_y:
                    raise NetworkError(f"output index {k} out of range for node {src}")
                if (src, node_id) not in edges:
                    edges.append((src, node_id))
                F.setdefault((src, node_id), np.zeros((by_id[node_id].n_d, by_id[src].n_y)))[row, k] = 1.0
        H: dict[str, np.ndarray] = {}
        W: list[str] = []
        for row, token in enumerate(outputs):
            src, k = parse(token)
            if src not in by_id or k >= by_id[src].n_y:
                raise NetworkError(f"output token {token!r} does not name a node output")
            H.setdefault(src, np.zeros((len(outputs), by_id[src].n_y)))[row, k] = 1.0
            if src not in W:
                W.append(src)
        return cls(
            tuple(nodes),
            tuple(edges),
            n_ext,
            len(outputs),
            F,
            E,
            H,
            frozenset(W if output_set is None else output_set),
            dict(causality_overrides or {}),
        )

    # ---------------------------------------------------------------- queries

    @cached_property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    @cached_property
    def _by_id(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    def node(self, node_id: str) -> Node:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise NetworkError(f"unknown node {node_id!r}") from None

    def contract(self, node_id: str) -> LtiRdContract:
        return self.node(node_id).contract

    def f(self, src: str, dst: str) -> np.ndarray:
        return self.F.get((src, dst), np.zeros((self.node(dst).n_d, self.node(src).n_y)))

    def e(self, node_id: str) -> np.ndarray:
        return self.E.get(node_id, np.zeros((self.node(node_id).n_d, self.n_d_ext)))

    def h(self, node_id: str) -> np.ndarray:
        return self.H.get(node_id, np.zeros((self.n_y_ext, self.node(node_id).n_y)))

    @cached_property
    def derived_causality(self) -> dict[Edge, str]:
        """Edge ``i -> j`` is strict iff the current-time input columns of
        every guarantee row of ``C_j`` vanish on what ``y_i`` feeds."""
        labels: dict[Edge, str] = {}
        for src, dst in self.edges:
            gd0 = self.contract(dst).guarantee_feedthrough()
            coupled = gd0 @ self.f(src, dst)
            labels[(src, dst)] = STRICT if not np.any(coupled != 0) else NONSTRICT
        return labels

    @cached_property
    def causality(self) -> dict[Edge, str]:
        """Derived labels with the user's relaxations applied."""
        labels = dict(self.derived_causality)
        labels.update(self.causality_overrides)
        return labels

    @cached_property
    def nsc_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if self.causality[e] == NONSTRICT)

    def topological_order(self) -> list[str]:
        return topological_order(self.node_ids, self.edges)

    def count_topological_orders(self, limit: int = 12) -> int:
        return count_topological_orders(self.node_ids, self.edges, limit)

    def backward_reachable(self, node_id: str, nsc_only: bool = False, include_self: bool = False) -> set[str]:
        """``BR(i)`` (or ``BR_nsc(i)``); with ``include_self`` this is ``BR_+(i)``."""
        found = backward_reachable(self.node_ids, self.nsc_edges if nsc_only else self.edges, node_id)
        if include_self:
            found.add(node_id)
        return found

    def is_dag(self) -> bool:
        return find_cycle(self.node_ids, self.edges) is None

    def check_assumptions(self) -> list[Finding]:
        """Structural checks; an empty list means both assumptions pass."""
        findings: list[Finding] = []
        cycle = find_cycle(self.node_ids, self.nsc_edges)
        if cycle is not None:
            text = ", ".join(f"{a}->{b}" for a, b in cycle)
            findings.append(
                Finding("algebraic_loop", f"algebraic loop of non-strictly causal edges: {text}", cycle=tuple(cycle))
            )
        for node in self.nodes:
            if node.id in self.output_set:
                continue
            if node.contract.output_in_assumptions() and np.any(self.e(node.id) != 0):
                findings.append(
                    Finding(
                        "output_dependent_assumption",
                        f"node {node.id} receives external input, is outside the output set, "
                        "and its assumptions depend on its own output",
                        node=node.id,
                    )
                )
        return findings
