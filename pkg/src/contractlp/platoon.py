"""Vehicle platooning case study.

A leader (vehicle 1) drives an exogenous speed profile; followers ``r = 2..M``
are double integrators with bounded parasitic acceleration, each governed by a
physical node ``phy{r}`` and a controller node ``ctr{r}``. The system-level
contract promises a time headway ``h`` and a speed limit for every follower
when the leader respects its own kinematics and speed limit.

All quantities are SI (m, m/s, m/s^2); km/h values are converted at the edges.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .contracts import LtiRdContract, contract_from_terms
from .network import Network, Node
from .verification import VerificationOptions, VerificationProblem

KMH = 1000.0 / 3600.0

ROW_NAMES = ("headway", "speed_max", "speed_min")


def kmh(value: float) -> float:
    return value * KMH


@dataclass(frozen=True)
class PlatoonParams:
    M: int = 2
    dt: float = 1.0
    h: float = 2.0
    v_max_leader: float = 110 * KMH
    v_max_follower: float = 100 * KMH
    w_acc: float = 0.3

    def __post_init__(self) -> None:
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"a platoon needs M >= 2 vehicles, got {self.M}")
        for name in ("dt", "h", "v_max_leader", "v_max_follower", "w_acc"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.v_max_follower * self.dt > 2 * self.w_acc * self.dt:
            raise ValueError("v_max_follower must exceed 2 * w_acc so the control interval is non-empty")

    @classmethod
    def from_kmh(cls, M: int, v_max_leader_kmh: float = 110, v_max_follower_kmh: float = 100, **kw) -> "PlatoonParams":
        return cls(M=M, v_max_leader=kmh(v_max_leader_kmh), v_max_follower=kmh(v_max_follower_kmh), **kw)


def phy(r: int) -> str:
    return f"phy{r}"


def ctr(r: int) -> str:
    return f"ctr{r}"


# --------------------------------------------------------------------------- contracts


def _kinematics(p: tuple, v: tuple, dt: float) -> list:
    """``p(k) = p(k-1) + dt v(k-1)`` as a pair of rows; ``p``/``v`` are (signal, coord)."""
    row = {(p[0], 0, p[1]): 1.0, (p[0], 1, p[1]): -1.0, (v[0], 1, v[1]): -dt}
    return [(row, 0.0), ({k: -c for k, c in row.items()}, 0.0)]


def _speed_box(v: tuple, v_max: float) -> list:
    return [({(v[0], 0, v[1]): 1.0}, v_max), ({(v[0], 0, v[1]): -1.0}, 0.0)]


def system_contract(params: PlatoonParams, h_tot: float | None = None) -> LtiRdContract:
    """Leader assumptions and follower headway/speed guarantees over all followers."""
    h = params.h if h_tot is None else h_tot
    n_f = params.M - 1
    guarantees = []
    for r in range(2, params.M + 1):
        p, v = 2 * (r - 2), 2 * (r - 2) + 1
        prev_p = ("d", 0) if r == 2 else ("y", 2 * (r - 3))
        # p_{r-1} - p_r - h v_r >= 0
        guarantees.append(({(prev_p[0], 0, prev_p[1]): -1.0, ("y", 0, p): 1.0, ("y", 0, v): h}, 0.0))
        guarantees += _speed_box(("y", v), params.v_max_follower)
    return contract_from_terms(
        2,
        2 * n_f,
        assumptions=[
            (1, _kinematics(("d", 0), ("d", 1), params.dt)),
            (0, _speed_box(("d", 1), params.v_max_leader)),
        ],
        guarantees=[(0, guarantees)],
        label="C_tot",
    )


def physical_contract(params: PlatoonParams, r: int) -> LtiRdContract:
    """Inputs ``[p_{r-1}, v_{r-1}, u_r]``, outputs ``[p_r, v_r]``."""
    dt, h, w, vf = params.dt, params.h, params.w_acc, params.v_max_follower
    input_bounds = [
        # u(k-1) below the headway-preserving bound computed from step k-1
        (
            {
                ("d", 1, 2): 1.0,
                ("d", 1, 0): -1.0 / (h * dt),
                ("d", 1, 1): -1.0 / h,
                ("y", 1, 0): 1.0 / (h * dt),
                ("y", 1, 1): 1.0 / dt + 1.0 / h,
            },
            -w,
        ),
        ({("d", 1, 2): -1.0, ("y", 1, 1): -1.0 / dt}, -w),
        ({("d", 1, 2): 1.0, ("y", 1, 1): 1.0 / dt}, vf / dt - w),
    ]
    headway = [({("d", 0, 0): -1.0, ("y", 0, 0): 1.0, ("y", 0, 1): h}, 0.0)]
    return contract_from_terms(
        3,
        2,
        assumptions=[(1, _kinematics(("d", 0), ("d", 1), dt) + input_bounds)],
        guarantees=[
            (0, headway + _speed_box(("y", 1), vf)),
            (1, _kinematics(("y", 0), ("y", 1), dt)),
        ],
        label=f"C_phy{r}",
    )


def controller_contract(params: PlatoonParams, r: int) -> LtiRdContract:
    """Inputs ``[p_{r-1}, v_{r-1}, p_r, v_r]``, output ``[u_r]``."""
    dt, h, w, vf = params.dt, params.h, params.w_acc, params.v_max_follower
    v_prev_max = params.v_max_leader if r == 2 else vf
    rows = [
        (
            {
                ("y", 0, 0): 1.0,
                ("d", 0, 0): -1.0 / (h * dt),
                ("d", 0, 1): -1.0 / h,
                ("d", 0, 2): 1.0 / (h * dt),
                ("d", 0, 3): 1.0 / dt + 1.0 / h,
            },
            -w,
        ),
        ({("y", 0, 0): -1.0, ("d", 0, 3): -1.0 / dt}, -w),
        ({("y", 0, 0): 1.0, ("d", 0, 3): 1.0 / dt}, vf / dt - w),
    ]
    return contract_from_terms(
        4,
        1,
        assumptions=[
            (1, _kinematics(("d", 0), ("d", 1), dt) + _kinematics(("d", 2), ("d", 3), dt)),
            (0, _speed_box(("d", 1), v_prev_max) + _speed_box(("d", 3), vf)),
        ],
        guarantees=[(0, rows)],
        label=f"C_ctr{r}",
    )


def build_network(params: PlatoonParams) -> Network:
    nodes, inputs, outputs = [], {}, []
    for r in range(2, params.M + 1):
        nodes += [Node(phy(r), physical_contract(params, r)), Node(ctr(r), controller_contract(params, r))]
        prev = ["ext:0", "ext:1"] if r == 2 else [f"{phy(r - 1)}:0", f"{phy(r - 1)}:1"]
        inputs[phy(r)] = prev + [f"{ctr(r)}:0"]
        inputs[ctr(r)] = prev + [f"{phy(r)}:0", f"{phy(r)}:1"]
        outputs += [f"{phy(r)}:0", f"{phy(r)}:1"]
    return Network.from_sources(nodes, inputs, outputs, n_d_ext=2)


def build_platoon(
    params: PlatoonParams, h_tot: float | None = None, options: VerificationOptions | None = None
) -> VerificationProblem:
    """Verification problem for an ``M``-vehicle platoon.

    ``h_tot`` overrides the headway promised by the system contract; the
    components always use ``params.h``.
    """
    return VerificationProblem(build_network(params), system_contract(params, h_tot), options or VerificationOptions())


# --------------------------------------------------------------------------- simulation


@dataclass(frozen=True)
class LeaderProfile:
    """Piecewise leader speed: each segment slews toward ``target`` (km/h) for ``duration`` seconds."""

    initial_kmh: float
    segments: tuple[tuple[float, float, float], ...]  # (duration s, target km/h, max slew m/s^2)

    @classmethod
    def default(cls) -> "LeaderProfile":
        square = tuple((25.0, target, 4.0) for target in (10, 95, 10, 95))
        return cls(95.0, ((100.0, 95.0, 1.0),) + square + ((100.0, 105.0, 0.05),))

    @classmethod
    def constant(cls, speed_kmh: float) -> "LeaderProfile":
        return cls(speed_kmh, ())

    @classmethod
    def from_dict(cls, data: dict) -> "LeaderProfile":
        segs = tuple(
            (float(s["duration"]), float(s["target_kmh"]), float(s["max_slew"])) for s in data["segments"]
        )
        return cls(float(data["initial_kmh"]), segs)

    def to_dict(self) -> dict:
        return {
            "initial_kmh": self.initial_kmh,
            "segments": [{"duration": d, "target_kmh": t, "max_slew": s} for d, t, s in self.segments],
        }

    def speeds(self, steps: int, dt: float) -> np.ndarray:
        """Leader speed in m/s at steps ``0..steps-1``."""
        out = np.empty(steps)
        v = kmh(self.initial_kmh)
        schedule = []
        for duration, target, slew in self.segments:
            schedule += [(kmh(target), slew)] * int(round(duration / dt))
        for k in range(steps):
            out[k] = v
            if k < len(schedule):
                target, slew = schedule[k]
                v = v + float(np.clip(target - v, -slew * dt, slew * dt))
        return out


@dataclass
class Trajectory:
    """Rows are steps, columns are vehicles ``1..M`` (column 0 is the leader)."""

    p: np.ndarray
    v: np.ndarray
    u: np.ndarray
    omega: np.ndarray
    seed: int
    infeasible: np.ndarray  # bool, per step and vehicle
    rng: str = "numpy.random.default_rng (PCG64)"

    @property
    def steps(self) -> int:
        return self.p.shape[0]

    @property
    def M(self) -> int:
        return self.p.shape[1]

    @property
    def infeasible_count(self) -> int:
        return int(np.count_nonzero(self.infeasible))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "vehicle", "p", "v", "u", "omega"])
        for k in range(self.steps):
            for i in range(self.M):
                u = "" if i == 0 else repr(float(self.u[k, i]))
                writer.writerow([k, i + 1, repr(float(self.p[k, i])), repr(float(self.v[k, i])), u, repr(float(self.omega[k, i]))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "rng": self.rng,
            "infeasible_count": self.infeasible_count,
            "p": self.p.tolist(),
            "v": self.v.tolist(),
            "u": self.u.tolist(),
            "omega": self.omega.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def system_signals(self) -> tuple[np.ndarray, np.ndarray]:
        """``(d_ext, y_ext)`` as seen by the system contract: leader state and follower states."""
        d = np.column_stack([self.p[:, 0], self.v[:, 0]])
        y = np.column_stack([c for i in range(1, self.M) for c in (self.p[:, i], self.v[:, i])])
        return d, y


def control_bounds(params: PlatoonParams, p_prev, v_prev, p, v) -> tuple[float, float, float]:
    """Lower bound and the two upper bounds on a follower's commanded acceleration."""
    dt, h, w, vf = params.dt, params.h, params.w_acc, params.v_max_follower
    lower = -v / dt + w
    upper_headway = (p_prev - p - h * v) / (h * dt) + (v_prev - v) / h - w
    upper_speed = (vf - v) / dt - w
    return lower, upper_headway, upper_speed


def simulate(
    params: PlatoonParams,
    steps: int = 300,
    seed: int = 0,
    leader_profile: LeaderProfile | None = None,
    initial_follower_kmh: float = 98.0,
    initial_gap: float = 80.0,
    noise: bool = True,
) -> Trajectory:
    """Closed-loop run of the saturating controller with uniform acceleration noise."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    profile = leader_profile or LeaderProfile.default()
    M, dt, w = params.M, params.dt, params.w_acc
    leader = profile.speeds(steps, dt)
    if np.any(leader < 0) or np.any(leader > params.v_max_leader + 1e-12):
        raise ValueError("leader profile leaves [0, v_max_leader]")
    rng = np.random.default_rng(seed)
    p = np.zeros((steps, M))
    v = np.zeros((steps, M))
    u = np.zeros((steps, M))
    omega = np.zeros((steps, M))
    infeasible = np.zeros((steps, M), dtype=bool)
    v[0, 0] = leader[0]
    for i in range(1, M):
        p[0, i] = p[0, i - 1] - initial_gap
        v[0, i] = kmh(initial_follower_kmh)
    for k in range(steps):
        v[k, 0] = leader[k]
        for i in range(1, M):
            lower, up1, up2 = control_bounds(params, p[k, i - 1], v[k, i - 1], p[k, i], v[k, i])
            upper = min(up1, up2)
            infeasible[k, i] = upper < lower
            u[k, i] = max(lower, upper)
        if noise:
            omega[k, 1:] = rng.uniform(-w, w, size=M - 1)
        if k + 1 < steps:
            p[k + 1] = p[k] + dt * v[k]
            v[k + 1, 1:] = v[k, 1:] + dt * (u[k, 1:] + omega[k, 1:])
    return Trajectory(p, v, u, omega, seed, infeasible)


def check_trajectory_guarantees(
    traj: Trajectory, params: PlatoonParams, tol: float = 1e-9
) -> tuple[bool, tuple[int, int, str] | None]:
    """System guarantees at every step; the record is ``(step, vehicle, row)`` with 1-based vehicles."""
    h, vf = params.h, params.v_max_follower
    for k in range(traj.steps):
        for i in range(1, traj.M):
            residuals = (
                traj.p[k, i] - traj.p[k, i - 1] + h * traj.v[k, i],
                traj.v[k, i] - vf,
                -traj.v[k, i],
            )
            for name, res in zip(ROW_NAMES, residuals):
                if res > tol:
                    return False, (k, i + 1, name)
    return True, None


def controller_rows_hold(traj: Trajectory, params: PlatoonParams, tol: float = 1e-9) -> bool:
    """Whether every recorded command satisfies the three controller-guarantee rows."""
    for k in range(traj.steps):
        for i in range(1, traj.M):
            lower, up1, up2 = control_bounds(params, traj.p[k, i - 1], traj.v[k, i - 1], traj.p[k, i], traj.v[k, i])
            if traj.u[k, i] < lower - tol or traj.u[k, i] > up1 + tol or traj.u[k, i] > up2 + tol:
                return False
    return True


__all__ = [
    "LeaderProfile",
    "PlatoonParams",
    "Trajectory",
    "build_network",
    "build_platoon",
    "check_trajectory_guarantees",
    "controller_contract",
    "controller_rows_hold",
    "ctr",
    "kmh",
    "phy",
    "physical_contract",
    "simulate",
    "system_contract",
]
