"""Command-line front end.

Exit codes: 0 success or verdict true, 1 verdict false (or a failed
trajectory check), 2 input error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from .contracts import ContractError
from .network import CycleError, NetworkError, topological_order
from .problem_io import GraphSpec, ProblemFileError, dump_problem, parse_graph, parse_problem, read_json
from .simplex import SimplexNumericalError
from .verification import OMEGA, VerificationError, VerificationOptions, build_groups, verify

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_SOLVER = 3

THREADS_ENV = "CONTRACTLP_THREADS"


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _emit_report(report, out: str | None, summary: bool) -> None:
    if out:
        Path(out).write_text(report.to_json() + "\n")
    if summary:
        print(report.summary())
    if not out and not summary:
        print(report.to_json())


def _print_findings(findings) -> None:
    for f in findings:
        _err(f"warning [{f.kind}]: {f.message}")


def _run_verify(problem, out: str | None, summary: bool) -> int:
    report = verify(problem, workers=_workers())
    _print_findings(report.findings)
    _emit_report(report, out, summary)
    return EXIT_OK if report.verdict else EXIT_FAIL


def cmd_verify(args: argparse.Namespace) -> int:
    problem = parse_problem(read_json(args.path))
    if args.strict:
        problem = type(problem)(problem.network, problem.c_tot, _with(problem.options, strict=True))
    return _run_verify(problem, args.out, args.summary)


def _with(options: VerificationOptions, **changes) -> VerificationOptions:
    values = {k: getattr(options, k) for k in ("tolerance", "mode", "horizon_extension", "extendibility_asserted", "strict")}
    values.update(changes)
    return VerificationOptions(**values)


def cmd_platoon(args: argparse.Namespace) -> int:
    from .platoon import LeaderProfile, PlatoonParams, build_platoon, check_trajectory_guarantees, kmh, simulate

    try:
        params = PlatoonParams(
            M=args.M, dt=args.dt, h=args.h,
            v_max_leader=kmh(args.v_leader_kmh), v_max_follower=kmh(args.v_follower_kmh), w_acc=args.w_acc,
        )
    except ValueError as exc:
        raise VerificationError(str(exc)) from None
    if args.verify:
        problem = build_platoon(params, h_tot=args.h_tot)
        if args.export:
            dump_problem(problem, args.export)
        return _run_verify(problem, args.out, args.summary)
    profile = LeaderProfile.from_dict(read_json(args.leader_profile)) if args.leader_profile else None
    traj = simulate(params, args.steps, args.seed, profile)
    ok, record = check_trajectory_guarantees(traj, params)
    if args.out:
        Path(args.out).write_text(traj.to_csv())
    else:
        sys.stdout.write(traj.to_csv())
    if args.json:
        Path(args.json).write_text(traj.to_json())
    status = {
        "guarantees_hold": ok,
        "first_violation": None if record is None else {"step": record[0], "vehicle": record[1], "row": record[2]},
        "infeasible_control_steps": traj.infeasible_count,
        "seed": traj.seed,
        "rng": traj.rng,
    }
    _err(json.dumps(status))
    return EXIT_OK if ok and traj.infeasible_count == 0 else EXIT_FAIL


def cmd_graph_info(args: argparse.Namespace) -> int:
    from .network import backward_reachable, count_topological_orders

    doc = read_json(args.path)
    network = None
    if "graph" in doc:
        spec = parse_graph(doc)
    else:
        network = parse_problem(doc).network
        spec = GraphSpec(network.node_ids, list(network.edges))
    try:
        order = topological_order(spec.nodes, spec.edges)
        print("topological order: " + " ".join(order))
    except CycleError as exc:
        print("cycle: " + " ".join(f"{a}->{b}" for a, b in exc.cycle))
    if args.count_orders:
        print(f"topological orderings: {count_topological_orders(spec.nodes, spec.edges, args.limit)}")
    width = max(len(n) for n in spec.nodes)
    print("backward-reachable sets:")
    for node in spec.nodes:
        br = backward_reachable(spec.nodes, spec.edges, node)
        line = f"  BR({node}){' ' * (width - len(node))} = {{{', '.join(n for n in spec.nodes if n in br)}}}"
        if network is not None:
            nsc = network.backward_reachable(node, nsc_only=True)
            line += f"   BR_nsc = {{{', '.join(n for n in spec.nodes if n in nsc)}}}"
        print(line)
    if network is not None:
        print("edge causality:")
        for (a, b), label in network.causality.items():
            print(f"  {a}->{b}: {label}")
        for f in network.check_assumptions():
            print(f"finding [{f.kind}]: {f.message}")
    return EXIT_OK


def cmd_dump_lp(args: argparse.Namespace) -> int:
    problem = parse_problem(read_json(args.path))
    for group in build_groups(problem):
        if group.target != args.target:
            continue
        if not 0 <= args.index < len(group.lps):
            raise VerificationError(f"target {args.target} has {len(group.lps)} LPs")
        text = group.lps[args.index].to_text()
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    raise VerificationError(f"no LP group for target {args.target!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contractlp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="verify a vertical contract from a problem file")
    p.add_argument("path")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--summary", action="store_true", help="print a target/rho/status/time table")
    p.add_argument("--strict", action="store_true", help="treat structural warnings as errors")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("platoon", help="platooning case study")
    p.add_argument("--M", type=int, required=True, help="number of vehicles including the leader")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--verify", action="store_true")
    mode.add_argument("--simulate", action="store_true")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report JSON (--verify) or trajectory CSV (--simulate)")
    p.add_argument("--json", help="also write the trajectory as JSON (--simulate)")
    p.add_argument("--summary", action="store_true")
    p.add_argument("--h-tot", type=float, default=None, help="headway promised by the system contract")
    p.add_argument("--export", help="write the generated problem file here (--verify)")
    p.add_argument("--leader-profile", help="JSON leader profile (--simulate)")
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--h", type=float, default=2.0)
    p.add_argument("--v-leader-kmh", type=float, default=110.0)
    p.add_argument("--v-follower-kmh", type=float, default=100.0)
    p.add_argument("--w-acc", type=float, default=0.3)
    p.set_defaults(func=cmd_platoon)

    p = sub.add_parser("graph-info", help="topological order, reachability and causality of a graph")
    p.add_argument("path")
    p.add_argument("--count-orders", action="store_true")
    p.add_argument("--limit", type=int, default=12, help="node bound for --count-orders")
    p.set_defaults(func=cmd_graph_info)

    p = sub.add_parser("dump-lp", help="print one LP of a problem in a plain LP listing")
    p.add_argument("path")
    p.add_argument("--target", default=OMEGA)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dump_lp)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ProblemFileError as exc:
        for ptr, msg in exc.errors:
            _err(f"error at {ptr or '/'}: {msg}")
        return EXIT_INPUT
    except VerificationError as exc:
        _err(f"error: {exc}")
        for f in exc.findings:
            _err(f"finding [{f.kind}]: {f.message}")
        return EXIT_INPUT
    except (NetworkError, ContractError, OSError) as exc:
        _err(f"error: {exc}")
        return EXIT_INPUT
    except SimplexNumericalError as exc:
        _err(f"solver failure: {exc}")
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
