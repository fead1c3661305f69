"""Linear time-invariant recursively-defined (LTI RD) contracts.

A contract on a component with input ``d`` (``n_d`` coordinates) and output
``y`` (``n_y`` coordinates) is a list of assumption blocks and a list of
guarantee blocks. Each block is a set of affine rows over a sliding window:

* an assumption block of depth ``m`` reads ``d(k-m:k)`` and ``y(k-m:k-1)``;
* a guarantee block of depth ``m`` reads ``d(k-m:k)`` and ``y(k-m:k)``.

Windows are stored oldest slot first, so the coefficient columns of slot ``s``
act on time ``k - m + s``. A row holds when ``coeff . window - rhs <= 0``, and
the block is required at every time ``k >= m``.

Blocks keep their declared depth. A contract's window depth is the largest
block depth, floored at 1; shallower blocks read the suffix of a window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

ASSUMPTION = "assumption"
GUARANTEE = "guarantee"

#: Value of ``eval_alpha``/``eval_gamma`` for a contract without rows.
VACUOUS = -math.inf

DEFAULT_TOLERANCE = 1e-9


class ContractError(ValueError):
    """Dimension or construction error in a contract or its windows."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _matrix(values, n_cols: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.size == 0 and arr.ndim != 2:
        arr = arr.reshape(0, n_cols)
    if arr.ndim != 2:
        raise ContractError(f"{what} must be a 2-D matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class InequalityBlock:
    """Rows ``coeff_d . d_window + coeff_y . y_window <= rhs`` of one depth."""

    kind: str
    depth: int
    coeff_d: np.ndarray
    coeff_y: np.ndarray
    rhs: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in (ASSUMPTION, GUARANTEE):
            raise ContractError(f"unknown block kind {self.kind!r}")
        if int(self.depth) != self.depth or self.depth < 0:
            raise ContractError(f"block depth must be a nonnegative integer, got {self.depth!r}")
        rhs = np.array(self.rhs, dtype=float).reshape(-1)
        coeff_d = _matrix(self.coeff_d, 0, "coeff_d")
        coeff_y = _matrix(self.coeff_y, 0, "coeff_y")
        rows = {coeff_d.shape[0], coeff_y.shape[0], rhs.shape[0]}
        if len(rows) != 1:
            raise ContractError(
                f"coeff_d, coeff_y and rhs row counts differ: "
                f"{coeff_d.shape[0]}, {coeff_y.shape[0]}, {rhs.shape[0]}"
            )
        if coeff_d.shape[1] % (self.depth + 1):
            raise ContractError(
                f"coeff_d has {coeff_d.shape[1]} columns, not a multiple of depth+1={self.depth + 1}"
            )
        slots_y = self.y_slots
        if slots_y == 0:
            if coeff_y.shape[1] != 0:
                raise ContractError("a depth-0 assumption block cannot read the output")
        elif coeff_y.shape[1] % slots_y:
            raise ContractError(
                f"coeff_y has {coeff_y.shape[1]} columns, not a multiple of {slots_y} output slots"
            )
        object.__setattr__(self, "depth", int(self.depth))
        object.__setattr__(self, "coeff_d", _frozen(coeff_d))
        object.__setattr__(self, "coeff_y", _frozen(coeff_y))
        object.__setattr__(self, "rhs", _frozen(rhs))

    @property
    def n_rows(self) -> int:
        return self.rhs.shape[0]

    @property
    def y_slots(self) -> int:
        return self.depth if self.kind == ASSUMPTION else self.depth + 1

    @property
    def n_d(self) -> int:
        return self.coeff_d.shape[1] // (self.depth + 1)

    def n_y(self, default: int) -> int:
        return self.coeff_y.shape[1] // self.y_slots if self.y_slots else default

    @classmethod
    def from_terms(
        cls,
        kind: str,
        n_d: int,
        n_y: int,
        depth: int,
        rows: Iterable[tuple[Mapping[tuple[str, int, int], float], float]],
    ) -> "InequalityBlock":
        """Build a block from sparse rows.

        Each row is ``(terms, rhs)`` where ``terms`` maps ``(signal, lag, coord)``
        to a coefficient; ``signal`` is ``"d"`` or ``"y"`` and ``lag`` counts
        steps back from the current time (``lag=0`` is time ``k``).
        """
        rows = list(rows)
        probe = cls(kind, depth, np.zeros((0, (depth + 1) * n_d)), np.zeros((0, 0)), [])
        slots_y = probe.y_slots
        coeff_d = np.zeros((len(rows), (depth + 1) * n_d))
        coeff_y = np.zeros((len(rows), slots_y * n_y))
        rhs = np.zeros(len(rows))
        for r, (terms, bound) in enumerate(rows):
            rhs[r] = bound
            for (signal, lag, coord), value in terms.items():
                slot = depth - lag
                if signal == "d":
                    if not 0 <= slot <= depth or not 0 <= coord < n_d:
                        raise ContractError(f"term ({signal}, {lag}, {coord}) outside the window")
                    coeff_d[r, slot * n_d + coord] += value
                elif signal == "y":
                    if not 0 <= slot < slots_y or not 0 <= coord < n_y:
                        raise ContractError(f"term ({signal}, {lag}, {coord}) outside the window")
                    coeff_y[r, slot * n_y + coord] += value
                else:
                    raise ContractError(f"unknown signal {signal!r}")
        return cls(kind, depth, coeff_d, coeff_y, rhs)

    def embed(self, depth: int, n_y: int) -> "InequalityBlock":
        """Same rows in a deeper window, with zero coefficients on the older slots."""
        if depth < self.depth:
            raise ContractError("cannot embed a block into a shallower window")
        extra = depth - self.depth
        pad_d = np.zeros((self.n_rows, extra * self.n_d))
        new_slots_y = depth if self.kind == ASSUMPTION else depth + 1
        pad_y = np.zeros((self.n_rows, (new_slots_y - self.y_slots) * n_y))
        coeff_y = self.coeff_y if self.y_slots else np.zeros((self.n_rows, 0))
        return InequalityBlock(
            self.kind,
            depth,
            np.hstack([pad_d, self.coeff_d]),
            np.hstack([pad_y, coeff_y]),
            self.rhs.copy(),
        )

    def scaled(self, factor: float) -> "InequalityBlock":
        return InequalityBlock(
            self.kind, self.depth, self.coeff_d * factor, self.coeff_y * factor, self.rhs * factor
        )

    def current_d_columns(self) -> np.ndarray:
        """Coefficients acting on ``d(k)``, one column per input coordinate."""
        n_d = self.n_d
        return self.coeff_d[:, self.depth * n_d : (self.depth + 1) * n_d]

    def residuals(self, d_window: np.ndarray, y_window: np.ndarray) -> np.ndarray:
        """Row values ``coeff . window - rhs`` on windows that end at the current time.

        The windows may be longer than the block needs; the suffix is read.
        """
        d_part = d_window[d_window.shape[0] - (self.depth + 1) :]
        y_part = y_window[y_window.shape[0] - self.y_slots :] if self.y_slots else y_window[:0]
        value = self.coeff_d @ d_part.reshape(-1) - self.rhs
        if self.y_slots:
            value = value + self.coeff_y @ y_part.reshape(-1)
        return value


@dataclass(frozen=True, eq=False)
class LtiRdContract:
    """Input/output dimensions plus assumption and guarantee blocks."""

    n_d: int
    n_y: int
    assumptions: tuple[InequalityBlock, ...] = ()
    guarantees: tuple[InequalityBlock, ...] = ()
    label: str = ""
    _depths: tuple[int, int] = field(init=False, repr=False, default=(1, 1))

    def __post_init__(self) -> None:
        if self.n_d < 1 or self.n_y < 1:
            raise ContractError("n_d and n_y must be positive")
        assumptions = tuple(self.assumptions)
        guarantees = tuple(self.guarantees)
        if not guarantees:
            guarantees = (
                InequalityBlock(GUARANTEE, 1, np.zeros((0, 2 * self.n_d)), np.zeros((0, 2 * self.n_y)), []),
            )
        for kind, blocks in ((ASSUMPTION, assumptions), (GUARANTEE, guarantees)):
            for idx, block in enumerate(blocks):
                if block.kind != kind:
                    raise ContractError(f"{kind} list holds a {block.kind} block at index {idx}")
                if block.n_d != self.n_d:
                    raise ContractError(
                        f"{kind} block {idx} of {self.label or 'contract'} reads {block.n_d} "
                        f"input coordinates, expected {self.n_d}"
                    )
                if block.y_slots and block.n_y(self.n_y) != self.n_y:
                    raise ContractError(
                        f"{kind} block {idx} of {self.label or 'contract'} reads "
                        f"{block.n_y(self.n_y)} output coordinates, expected {self.n_y}"
                    )
        object.__setattr__(self, "assumptions", assumptions)
        object.__setattr__(self, "guarantees", guarantees)
        depth_a = max([1] + [b.depth for b in assumptions])
        depth_g = max([1] + [b.depth for b in guarantees])
        object.__setattr__(self, "_depths", (depth_a, depth_g))

    @property
    def assumption_depth(self) -> int:
        return self._depths[0]

    @property
    def guarantee_depth(self) -> int:
        return self._depths[1]

    @property
    def n_assumption_rows(self) -> int:
        return sum(b.n_rows for b in self.assumptions)

    @property
    def n_guarantee_rows(self) -> int:
        return sum(b.n_rows for b in self.guarantees)

    def blocks(self, kind: str) -> tuple[InequalityBlock, ...]:
        return self.assumptions if kind == ASSUMPTION else self.guarantees

    def guarantee_feedthrough(self) -> np.ndarray:
        """Stacked coefficients of every guarantee row on the current input ``d(k)``."""
        parts = [b.current_d_columns() for b in self.guarantees]
        return np.vstack(parts) if parts else np.zeros((0, self.n_d))

    def output_in_assumptions(self) -> bool:
        return any(b.y_slots and np.any(b.coeff_y != 0) for b in self.assumptions)


def as_window(values, dim: int, what: str = "window") -> np.ndarray:
    """Coerce ``values`` to a ``(steps, dim)`` float array, oldest step first."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1 and dim == 1:
        arr = arr.reshape(-1, 1)
    if arr.size == 0:
        arr = arr.reshape(0, dim)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ContractError(f"{what} must have shape (steps, {dim}), got {arr.shape}")
    return arr


def _evaluate(contract: LtiRdContract, kind: str, d_window, y_window) -> float:
    blocks = contract.blocks(kind)
    d = as_window(d_window, contract.n_d, "d window")
    y = as_window(y_window, contract.n_y, "y window")
    need = max([0] + [b.depth for b in blocks]) + 1
    if d.shape[0] < need:
        raise ContractError(f"d window has {d.shape[0]} steps, the {kind}s need {need}")
    expected_y = d.shape[0] - 1 if kind == ASSUMPTION else d.shape[0]
    if y.shape[0] != expected_y:
        raise ContractError(
            f"y window has {y.shape[0]} steps, expected {expected_y} for a {d.shape[0]}-step d window"
        )
    if not any(b.n_rows for b in blocks):
        return VACUOUS
    return float(max(np.max(b.residuals(d, y)) for b in blocks if b.n_rows))


def eval_alpha(contract: LtiRdContract, d_window, y_window) -> float:
    """Piecewise-linear assumption function at the last step of the windows.

    ``d_window`` covers ``k-M..k`` and ``y_window`` covers ``k-M..k-1``. Returns
    the largest row residual over all assumption blocks, or :data:`VACUOUS` for a
    contract without assumption rows.
    """
    return _evaluate(contract, ASSUMPTION, d_window, y_window)


def eval_gamma(contract: LtiRdContract, d_window, y_window) -> float:
    """Piecewise-linear guarantee function; both windows cover ``k-M..k``."""
    return _evaluate(contract, GUARANTEE, d_window, y_window)


def first_violation(
    contract: LtiRdContract, kind: str, d, y, tol: float = DEFAULT_TOLERANCE
) -> tuple[int, int, int] | None:
    """Earliest ``(time, block, row)`` whose residual exceeds ``tol`` on a signal prefix.

    Each block is checked at every time from its own depth to the end of the prefix.
    """
    d = as_window(d, contract.n_d, "d")
    y = as_window(y, contract.n_y, "y")
    if d.shape[0] != y.shape[0]:
        raise ContractError(f"d has {d.shape[0]} steps but y has {y.shape[0]}")
    blocks = contract.blocks(kind)
    for k in range(d.shape[0]):
        for b_idx, block in enumerate(blocks):
            if k < block.depth or not block.n_rows:
                continue
            lo = k - block.depth
            y_hi = k if kind == ASSUMPTION else k + 1
            res = block.residuals(d[lo : k + 1], y[lo:y_hi])
            bad = np.flatnonzero(res > tol)
            if bad.size:
                return k, b_idx, int(bad[0])
    return None


def check_assumption_prefix(contract: LtiRdContract, d, y, tol: float = DEFAULT_TOLERANCE) -> bool:
    """True when the assumptions hold at every time of the prefix ``0..n``."""
    return first_violation(contract, ASSUMPTION, d, y, tol) is None


def check_guarantee_prefix(contract: LtiRdContract, d, y, tol: float = DEFAULT_TOLERANCE) -> bool:
    """True when the guarantees hold at every time of the prefix ``0..n``."""
    return first_violation(contract, GUARANTEE, d, y, tol) is None


def is_srd(contract: LtiRdContract, input_coords: Iterable[int]) -> bool:
    """Whether the guarantees at time ``k`` ignore ``d(k)`` on ``input_coords`` (0-based)."""
    coords = sorted(set(input_coords))
    for c in coords:
        if not 0 <= c < contract.n_d:
            raise ContractError(f"input coordinate {c} out of range 0..{contract.n_d - 1}")
    if not coords:
        return True
    return not np.any(contract.guarantee_feedthrough()[:, coords] != 0)


def contract_from_terms(
    n_d: int,
    n_y: int,
    assumptions: Sequence[tuple[int, list]] = (),
    guarantees: Sequence[tuple[int, list]] = (),
    label: str = "",
) -> LtiRdContract:
    """Shorthand: each block is ``(depth, rows)`` in the :meth:`InequalityBlock.from_terms` format."""
    return LtiRdContract(
        n_d,
        n_y,
        tuple(InequalityBlock.from_terms(ASSUMPTION, n_d, n_y, m, rows) for m, rows in assumptions),
        tuple(InequalityBlock.from_terms(GUARANTEE, n_d, n_y, m, rows) for m, rows in guarantees),
        label,
    )


def residual_at(contract: LtiRdContract, kind: str, d, y, time: int) -> float:
    """Max residual at ``time`` over the blocks deep enough to be active there.

    ``d`` and ``y`` are whole signals starting at time 0. At times past the
    contract depth this equals :func:`eval_alpha` / :func:`eval_gamma` on the
    trailing window; earlier, only blocks with ``depth <= time`` count.
    """
    d = as_window(d, contract.n_d, "d")
    y = as_window(y, contract.n_y, "y")
    worst = VACUOUS
    for block in contract.blocks(kind):
        if block.depth > time or not block.n_rows:
            continue
        lo = time - block.depth
        y_hi = time if kind == ASSUMPTION else time + 1
        worst = max(worst, float(np.max(block.residuals(d[lo : time + 1], y[lo:y_hi]))))
    return worst
