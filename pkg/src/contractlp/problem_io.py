"""JSON problem files: schema validation, parsing and canonical serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .contracts import ASSUMPTION, GUARANTEE, ContractError, InequalityBlock, LtiRdContract
from .network import Network, NetworkError, Node
from .verification import VerificationError, VerificationOptions, VerificationProblem


class ProblemFileError(ValueError):
    """Invalid problem file; ``errors`` holds ``(json_pointer, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{ptr or '/'}: {msg}" for ptr, msg in errors))


@dataclass(frozen=True)
class GraphSpec:
    """Plain directed graph from a ``{"graph": ...}`` file."""

    nodes: list[str]
    edges: list[tuple[str, str]]


def load_schema() -> dict:
    text = resources.files("contractlp").joinpath("schema/problem.schema.json").read_text()
    return json.loads(text)


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def validate_document(doc: Any) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ProblemFileError([(_pointer(e.absolute_path), e.message) for e in errors])


# --------------------------------------------------------------------------- parsing


def _matrix(value, rows: int, cols: int) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.size == 0:
        return np.zeros((rows, cols))
    return arr


def parse_contract(data: dict, label: str = "", where: str = "") -> LtiRdContract:
    n_d, n_y = data["n_d"], data["n_y"]
    try:
        blocks = {}
        for kind, key in ((ASSUMPTION, "assumption_blocks"), (GUARANTEE, "guarantee_blocks")):
            out = []
            for k, raw in enumerate(data.get(key, [])):
                depth = raw["depth"]
                rows = len(raw["rhs"])
                y_slots = depth if kind == ASSUMPTION else depth + 1
                try:
                    out.append(
                        InequalityBlock(
                            kind,
                            depth,
                            _matrix(raw["coeff_d"], rows, (depth + 1) * n_d),
                            _matrix(raw["coeff_y"], rows, y_slots * n_y),
                            raw["rhs"],
                        )
                    )
                except ContractError as exc:
                    raise ProblemFileError([(f"{where}/{key}/{k}", str(exc))]) from None
                blk = out[-1]
                if blk.coeff_d.shape[1] != (depth + 1) * n_d or blk.coeff_y.shape[1] != y_slots * n_y:
                    raise ProblemFileError(
                        [(f"{where}/{key}/{k}", f"matrix widths do not match depth {depth}, n_d={n_d}, n_y={n_y}")]
                    )
            blocks[kind] = tuple(out)
        return LtiRdContract(n_d, n_y, blocks[ASSUMPTION], blocks[GUARANTEE], data.get("label", label))
    except ContractError as exc:
        raise ProblemFileError([(where, str(exc))]) from None


def parse_problem(doc: dict) -> VerificationProblem:
    validate_document(doc)
    if "network" not in doc:
        raise ProblemFileError([("", "a verification problem needs contracts, network and c_tot")])
    contracts = {
        label: parse_contract(raw, label, f"/contracts/{label}") for label, raw in doc["contracts"].items()
    }
    net = doc["network"]
    nodes = []
    for k, raw in enumerate(net["nodes"]):
        if raw["contract"] not in contracts:
            raise ProblemFileError([(f"/network/nodes/{k}/contract", f"unknown contract {raw['contract']!r}")])
        nodes.append(Node(raw["id"], contracts[raw["contract"]]))
    overrides = {(e["src"], e["dst"]): e["causality"] for e in net.get("edges", []) if "causality" in e}
    wiring = net["wiring"]
    try:
        if "stack" in wiring:
            stack = wiring["stack"]
            network = Network.from_sources(
                nodes,
                stack["inputs"],
                stack["outputs"],
                n_d_ext=net.get("n_d_ext"),
                output_set=net.get("output_set"),
                causality_overrides=overrides,
            )
            listed = {(e["src"], e["dst"]) for e in net.get("edges", [])}
            missing = listed - set(network.edges)
            if missing:
                src, dst = sorted(missing)[0]
                raise ProblemFileError([("/network/edges", f"edge {src}->{dst} carries no wiring")])
        else:
            for key in ("n_d_ext", "n_y_ext", "edges"):
                if key not in net:
                    raise ProblemFileError([("/network", f"dense wiring needs {key!r}")])
            edges = [(e["src"], e["dst"]) for e in net["edges"]]
            F = {(f["src"], f["dst"]): f["matrix"] for f in wiring.get("F", [])}
            by_id = {n.id: n for n in nodes}
            E = {k: _matrix(v, by_id[k].n_d if k in by_id else 0, net["n_d_ext"]) for k, v in wiring.get("E", {}).items()}
            network = Network(
                tuple(nodes),
                tuple(edges),
                net["n_d_ext"],
                net["n_y_ext"],
                F,
                E,
                wiring.get("H", {}),
                frozenset(net.get("output_set", wiring.get("H", {}).keys())),
                overrides,
            )
    except NetworkError as exc:
        raise ProblemFileError([("/network", str(exc))]) from None
    raw_tot = doc["c_tot"]
    if isinstance(raw_tot, str):
        if raw_tot not in contracts:
            raise ProblemFileError([("/c_tot", f"unknown contract {raw_tot!r}")])
        c_tot = contracts[raw_tot]
    else:
        c_tot = parse_contract(raw_tot, "c_tot", "/c_tot")
    try:
        options = VerificationOptions(**doc.get("options", {}))
        return VerificationProblem(network, c_tot, options)
    except VerificationError as exc:
        raise ProblemFileError([("/c_tot" if "contract" in str(exc) else "/options", str(exc))]) from None


def parse_graph(doc: dict) -> GraphSpec:
    validate_document(doc)
    if "graph" not in doc:
        raise ProblemFileError([("", "not a graph file")])
    nodes = list(doc["graph"]["nodes"])
    edges = [tuple(e) for e in doc["graph"]["edges"]]
    for k, (a, b) in enumerate(edges):
        for name in (a, b):
            if name not in nodes:
                raise ProblemFileError([(f"/graph/edges/{k}", f"unknown node {name!r}")])
    return GraphSpec(nodes, edges)


def read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ProblemFileError([("", f"not valid JSON: {exc}")]) from None


def load_problem(path: str | Path) -> VerificationProblem:
    return parse_problem(read_json(path))


# --------------------------------------------------------------------------- serialization


def contract_to_dict(contract: LtiRdContract) -> dict:
    def block(b: InequalityBlock) -> dict:
        return {"depth": b.depth, "coeff_d": b.coeff_d.tolist(), "coeff_y": b.coeff_y.tolist(), "rhs": b.rhs.tolist()}

    out = {
        "n_d": contract.n_d,
        "n_y": contract.n_y,
        "assumption_blocks": [block(b) for b in contract.assumptions],
        "guarantee_blocks": [block(b) for b in contract.guarantees],
    }
    if contract.label:
        out["label"] = contract.label
    return out


def problem_to_dict(problem: VerificationProblem) -> dict:
    """Canonical document: dense wiring, contracts keyed by unique labels, sorted keys."""
    network = problem.network
    labels: dict[int, str] = {}
    contracts: dict[str, dict] = {}
    for node in network.nodes:
        key = id(node.contract)
        if key in labels:
            continue
        label = node.contract.label or f"C_{node.id}"
        while label in contracts:
            label += "_"
        labels[key] = label
        contracts[label] = contract_to_dict(node.contract)
    options = problem.options
    return {
        "contracts": contracts,
        "network": {
            "n_d_ext": network.n_d_ext,
            "n_y_ext": network.n_y_ext,
            "nodes": [{"id": n.id, "contract": labels[id(n.contract)]} for n in network.nodes],
            "edges": [
                {"src": a, "dst": b, **({"causality": network.causality_overrides[(a, b)]} if (a, b) in network.causality_overrides else {})}
                for a, b in network.edges
            ],
            "wiring": {
                "F": [{"src": a, "dst": b, "matrix": m.tolist()} for (a, b), m in network.F.items()],
                "E": {k: m.tolist() for k, m in network.E.items()},
                "H": {k: m.tolist() for k, m in network.H.items()},
            },
            "output_set": [n for n in network.node_ids if n in network.output_set],
        },
        "c_tot": contract_to_dict(problem.c_tot),
        "options": {
            "tolerance": options.tolerance,
            "mode": options.mode,
            "horizon_extension": options.horizon_extension,
            "extendibility_asserted": options.extendibility_asserted,
            "strict": options.strict,
        },
    }


def dump_problem(problem: VerificationProblem, path: str | Path | None = None) -> str:
    text = json.dumps(problem_to_dict(problem), indent=1, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
