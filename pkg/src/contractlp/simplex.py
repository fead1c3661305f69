"""Dense two-phase primal simplex for small linear programs.

Problems are ``maximize c.x + offset`` subject to ``A_eq x = b_eq`` and
``A_in x <= b_in`` with free variables. Equalities are eliminated up front by
Gauss-Jordan elimination with complete pivoting; the remaining free variables
are split as ``z = z+ - z-`` and the inequality system is solved with a
tableau simplex. Dantzig pricing is used until a run of degenerate pivots
suggests cycling, after which Bland's rule takes over.

Every optimal point is recomputed from its final basis and checked against the
original constraints. A point that fails the check triggers one retry with
Bland's rule and a coarser pivot tolerance; if that also fails,
:class:`SimplexNumericalError` is raised rather than returning a wrong answer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
STALL_LIMIT = 50


class SimplexNumericalError(RuntimeError):
    """The solver could not produce a verified answer."""


@dataclass(frozen=True, eq=False)
class LpProblem:
    """``maximize objective . x + offset`` s.t. ``eq_lhs x = eq_rhs``, ``ineq_lhs x <= ineq_rhs``."""

    objective: np.ndarray
    eq_lhs: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    ineq_lhs: np.ndarray | None = None
    ineq_rhs: np.ndarray | None = None
    names: Sequence[str] | None = None
    offset: float = 0.0

    def __post_init__(self) -> None:
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        n = c.shape[0]
        if n < 1:
            raise ValueError("an LP needs at least one variable")

        def pair(lhs, rhs, what):
            if lhs is None:
                lhs = np.zeros((0, n))
            lhs = np.asarray(lhs, dtype=float)
            if lhs.size == 0:
                lhs = lhs.reshape(0, n)
            rhs = np.zeros(lhs.shape[0]) if rhs is None else np.asarray(rhs, dtype=float).reshape(-1)
            if lhs.ndim != 2 or lhs.shape[1] != n:
                raise ValueError(f"{what} matrix has shape {lhs.shape}, expected (rows, {n})")
            if rhs.shape[0] != lhs.shape[0]:
                raise ValueError(f"{what} right-hand side has {rhs.shape[0]} entries for {lhs.shape[0]} rows")
            return lhs, rhs

        eq_lhs, eq_rhs = pair(self.eq_lhs, self.eq_rhs, "equality")
        ineq_lhs, ineq_rhs = pair(self.ineq_lhs, self.ineq_rhs, "inequality")
        if self.names is not None and len(self.names) != n:
            raise ValueError(f"{len(self.names)} names for {n} variables")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "eq_lhs", eq_lhs)
        object.__setattr__(self, "eq_rhs", eq_rhs)
        object.__setattr__(self, "ineq_lhs", ineq_lhs)
        object.__setattr__(self, "ineq_rhs", ineq_rhs)

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.eq_lhs.shape[0] + self.ineq_lhs.shape[0]

    def value_at(self, x: np.ndarray) -> float:
        return float(self.objective @ x + self.offset)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest scaled constraint violation of ``x``; at most 0 when feasible."""
        worst = 0.0
        if self.eq_lhs.shape[0]:
            scale = 1.0 + np.max(np.abs(self.eq_rhs))
            worst = max(worst, float(np.max(np.abs(self.eq_lhs @ x - self.eq_rhs))) / scale)
        if self.ineq_lhs.shape[0]:
            scale = 1.0 + np.max(np.abs(self.ineq_rhs))
            worst = max(worst, float(np.max(self.ineq_lhs @ x - self.ineq_rhs)) / scale)
        return worst

    def to_text(self) -> str:
        """Plain LP-style listing, handy for cross-checking with other solvers."""
        names = list(self.names) if self.names is not None else [f"x{j}" for j in range(self.n_vars)]

        def expr(row: np.ndarray) -> str:
            terms = [f"{v:+.17g} {names[j]}" for j, v in enumerate(row) if v != 0]
            return " ".join(terms) if terms else "0"

        lines = ["maximize", f"  obj: {expr(self.objective)} {self.offset + 0.0:+.17g}", "subject to"]
        for r in range(self.eq_lhs.shape[0]):
            lines.append(f"  e{r}: {expr(self.eq_lhs[r])} = {self.eq_rhs[r]:.17g}")
        for r in range(self.ineq_lhs.shape[0]):
            lines.append(f"  c{r}: {expr(self.ineq_lhs[r])} <= {self.ineq_rhs[r]:.17g}")
        lines.append("bounds")
        lines.extend(f"  {name} free" for name in names)
        lines.append("end")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LpOutcome:
    status: str
    value: float | None = None
    point: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


# --------------------------------------------------------------------------- presolve


@dataclass
class _Reduced:
    """Inequality-only problem in the free coordinates ``z``: ``x = x0 + N z``."""

    x0: np.ndarray
    N: np.ndarray
    G: np.ndarray
    h: np.ndarray
    infeasible: bool = False


def _eliminate_equalities(lp: LpProblem, pivot_tol: float, feas_tol: float) -> _Reduced:
    n = lp.n_vars
    A = lp.eq_lhs.copy()
    b = lp.eq_rhs.copy()
    m = A.shape[0]
    pivots: list[tuple[int, int]] = []
    if m:
        scale = max(1.0, float(np.max(np.abs(A))))
        free_rows = np.ones(m, dtype=bool)
        free_cols = np.ones(n, dtype=bool)
        while free_rows.any() and free_cols.any():
            sub = np.abs(A[np.ix_(free_rows, free_cols)])
            flat = int(np.argmax(sub))
            if sub.flat[flat] <= pivot_tol * 10 * scale:
                break
            r = int(np.flatnonzero(free_rows)[flat // sub.shape[1]])
            c = int(np.flatnonzero(free_cols)[flat % sub.shape[1]])
            piv = A[r, c]
            A[r] /= piv
            b[r] /= piv
            col = A[:, c].copy()
            col[r] = 0.0
            nz = np.flatnonzero(col)
            if nz.size:
                A[nz] -= np.outer(col[nz], A[r])
                b[nz] -= col[nz] * b[r]
                A[nz, c] = 0.0
            free_rows[r] = False
            free_cols[c] = False
            pivots.append((r, c))
        leftover = np.flatnonzero(free_rows)
        if leftover.size and np.max(np.abs(b[leftover])) > feas_tol * (1.0 + np.max(np.abs(lp.eq_rhs))):
            return _Reduced(np.zeros(n), np.zeros((n, 0)), np.zeros((0, 0)), np.zeros(0), infeasible=True)
    pivot_cols = [c for _, c in pivots]
    pivot_set = set(pivot_cols)
    free = [j for j in range(n) if j not in pivot_set]
    x0 = np.zeros(n)
    N = np.zeros((n, len(free)))
    for k, j in enumerate(free):
        N[j, k] = 1.0
    for r, c in pivots:
        x0[c] = b[r]
        N[c] = -A[r, free]
    G = lp.ineq_lhs @ N
    h = lp.ineq_rhs - lp.ineq_lhs @ x0
    return _Reduced(x0, N, G, h)


def _prepare_rows(G: np.ndarray, h: np.ndarray, feas_tol: float) -> tuple[np.ndarray, np.ndarray, bool]:
    """Scale rows to unit max-norm and drop empty rows; flag trivially infeasible ones."""
    if G.shape[0] == 0:
        return G, h, False
    norms = np.max(np.abs(G), axis=1) if G.shape[1] else np.zeros(G.shape[0])
    empty = norms <= 1e-12 * max(1.0, float(np.max(norms)) if norms.size else 1.0)
    scale = 1.0 + float(np.max(np.abs(h)))
    if np.any(h[empty] < -feas_tol * scale):
        return G, h, True
    keep = ~empty
    return G[keep] / norms[keep, None], h[keep] / norms[keep], False


# --------------------------------------------------------------------------- tableau


class _Tableau:
    """Standard-form tableau over ``[z+, z-, slack, artificial]``."""

    def __init__(self, G: np.ndarray, h: np.ndarray):
        m, nf = G.shape
        neg = h < 0
        n_art = int(np.count_nonzero(neg))
        self.nf = nf
        self.m = m
        self.art_start = 2 * nf + m
        width = self.art_start + n_art + 1
        T = np.zeros((m, width))
        sign = np.where(neg, -1.0, 1.0)
        T[:, :nf] = G * sign[:, None]
        T[:, nf : 2 * nf] = -T[:, :nf]
        T[np.arange(m), 2 * nf + np.arange(m)] = sign
        T[:, -1] = h * sign
        basis = 2 * nf + np.arange(m)
        art_rows = np.flatnonzero(neg)
        T[art_rows, self.art_start + np.arange(n_art)] = 1.0
        basis[art_rows] = self.art_start + np.arange(n_art)
        self.T = T
        self.basis = basis
        self.rows = np.arange(m)  # original row index of every tableau row
        self.G = G
        self.h = h

    def copy(self) -> "_Tableau":
        other = object.__new__(_Tableau)
        other.__dict__.update(self.__dict__)
        other.T = self.T.copy()
        other.basis = self.basis.copy()
        other.rows = self.rows.copy()
        return other

    @property
    def n_cols(self) -> int:
        return self.T.shape[1] - 1

    def pivot(self, r: int, c: int, d: np.ndarray) -> None:
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        nz = np.flatnonzero(col)
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
            T[nz, c] = 0.0
        d -= d[c] * T[r]
        d[c] = 0.0
        self.basis[r] = c

    def run(self, d: np.ndarray, n_active: int, pivot_tol: float, bland: bool, max_iter: int) -> str:
        """Maximize from the current basis; ``d`` holds the reduced costs and ``-value``."""
        T = self.T
        opt_tol = 1e-9
        stall = 0
        use_bland = bland
        for _ in range(max_iter):
            cand = np.flatnonzero(d[:n_active] > opt_tol)
            if cand.size == 0:
                return OPTIMAL
            if use_bland:
                c = int(cand[0])
            else:
                c = int(cand[np.argmax(d[cand])])
            col = T[:, c]
            eligible = np.flatnonzero(col > pivot_tol)
            if eligible.size == 0:
                return UNBOUNDED
            ratios = T[eligible, -1] / col[eligible]
            best = float(np.min(ratios))
            ties = eligible[ratios <= best + 1e-12 * (1.0 + abs(best))]
            if use_bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(col[ties])])
            if best <= 1e-12:
                stall += 1
                if stall >= STALL_LIMIT:
                    use_bland = True
            else:
                stall = 0
            self.pivot(r, c, d)
        raise SimplexNumericalError("iteration limit reached")

    def phase_one(self, pivot_tol: float, feas_tol: float, bland: bool) -> bool:
        """Drive artificials to zero; returns False when the system is infeasible."""
        T = self.T
        art = self.basis >= self.art_start
        if art.any():
            d = np.zeros(T.shape[1])
            d[:-1] = T[art, :-1].sum(axis=0)
            d[self.art_start : -1] = 0.0
            d[-1] = T[art, -1].sum()
            max_iter = 50 * (self.m + self.n_cols) + 1000
            self.run(d, self.n_cols, pivot_tol, bland, max_iter)
            infeasibility = float(T[self.basis >= self.art_start, -1].sum())
            if infeasibility > feas_tol * (1.0 + float(np.max(np.abs(self.h)))):
                return False
            # pivot remaining (zero-level) artificials out, dropping redundant rows
            drop = []
            dummy = np.zeros(T.shape[1])
            for r in np.flatnonzero(self.basis >= self.art_start):
                row = np.abs(T[r, : self.art_start])
                c = int(np.argmax(row)) if row.size else 0
                if row.size and row[c] > pivot_tol * 1e3:
                    self.pivot(r, c, dummy)
                else:
                    drop.append(r)
            if drop:
                keep = np.setdiff1d(np.arange(T.shape[0]), drop)
                T = T[keep]
                self.basis = self.basis[keep]
                self.rows = self.rows[keep]
        self.T = np.hstack([T[:, : self.art_start], T[:, -1:]])
        return True

    def phase_two(self, cz: np.ndarray, pivot_tol: float, bland: bool) -> str:
        T = self.T
        cost = np.concatenate([cz, -cz, np.zeros(self.m)])
        cb = cost[self.basis]
        d = np.empty(T.shape[1])
        d[:-1] = cost - cb @ T[:, :-1]
        d[-1] = -cb @ T[:, -1]
        d[self.basis] = 0.0
        max_iter = 50 * (T.shape[0] + self.n_cols) + 1000
        return self.run(d, self.n_cols, pivot_tol, bland, max_iter)

    def point(self) -> np.ndarray:
        """Recompute the basic solution from the original rows for accuracy."""
        nf, m = self.nf, self.m
        G = self.G[self.rows]
        A = np.zeros((len(self.rows), 2 * nf + m))
        A[:, :nf] = G
        A[:, nf : 2 * nf] = -G
        A[np.arange(len(self.rows)), 2 * nf + self.rows] = 1.0
        B = A[:, self.basis]
        rhs = self.h[self.rows]
        try:
            xb = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError:
            xb = self.T[:, -1].copy()
        full = np.zeros(2 * nf + m)
        full[self.basis] = xb
        return full[:nf] - full[nf : 2 * nf]


# --------------------------------------------------------------------------- driver


def _objective_reduced(lp: LpProblem, red: _Reduced) -> tuple[np.ndarray, float]:
    return lp.objective @ red.N, float(lp.objective @ red.x0) + lp.offset


def _finish(lp: LpProblem, red: _Reduced, z: np.ndarray, feas_tol: float) -> LpOutcome | None:
    x = red.x0 + red.N @ z
    if lp.max_violation(x) > feas_tol:
        return None
    return LpOutcome(OPTIMAL, lp.value_at(x), x)


class _Group:
    """Presolve and phase one shared by LPs with identical constraints."""

    def __init__(self, lp: LpProblem, pivot_tol: float, feas_tol: float, bland: bool):
        self.pivot_tol = pivot_tol
        self.feas_tol = feas_tol
        self.bland = bland
        self.red = _eliminate_equalities(lp, pivot_tol, feas_tol)
        self.tableau: _Tableau | None = None
        self.infeasible = self.red.infeasible
        self.trivial = False
        if self.infeasible:
            return
        G, h, bad = _prepare_rows(self.red.G, self.red.h, feas_tol)
        if bad:
            self.infeasible = True
            return
        if G.shape[1] == 0 or G.shape[0] == 0:
            self.trivial = True
            self.G = G
            return
        tab = _Tableau(G, h)
        if not tab.phase_one(pivot_tol, feas_tol, bland):
            self.infeasible = True
            return
        self.tableau = tab

    def solve(self, lp: LpProblem) -> LpOutcome | None:
        if self.infeasible:
            return LpOutcome(INFEASIBLE)
        cz, const = _objective_reduced(lp, self.red)
        nf = self.red.N.shape[1]
        if self.trivial:
            if nf and np.any(np.abs(cz) > 1e-12 * (1.0 + np.max(np.abs(lp.objective)))):
                return LpOutcome(UNBOUNDED)
            return _finish(lp, self.red, np.zeros(nf), self.feas_tol)
        tab = self.tableau.copy()
        status = tab.phase_two(cz, self.pivot_tol, self.bland)
        if status == UNBOUNDED:
            return LpOutcome(UNBOUNDED)
        return _finish(lp, self.red, tab.point(), self.feas_tol)


def _solve_group(lps: Sequence[LpProblem], pivot_tol: float, feas_tol: float) -> list[LpOutcome]:
    out: list[LpOutcome | None] = [None] * len(lps)
    try:
        group = _Group(lps[0], pivot_tol, feas_tol, bland=False)
        for k, lp in enumerate(lps):
            out[k] = group.solve(lp)
    except SimplexNumericalError:
        pass
    retry = [k for k, o in enumerate(out) if o is None]
    if retry:
        group = _Group(lps[retry[0]], pivot_tol * 100, feas_tol, bland=True)
        for k in retry:
            out[k] = group.solve(lps[k])
            if out[k] is None:
                raise SimplexNumericalError(
                    "optimal basis failed the feasibility check even with Bland's rule"
                )
    return out  # type: ignore[return-value]


def solve(lp: LpProblem, pivot_tol: float = PIVOT_TOL, feas_tol: float = FEAS_TOL) -> LpOutcome:
    """Solve one LP and classify it as optimal, infeasible or unbounded."""
    return _solve_group([lp], pivot_tol, feas_tol)[0]


def _same_constraints(a: LpProblem, b: LpProblem) -> bool:
    def same(x: np.ndarray, y: np.ndarray) -> bool:
        return x is y or (x.shape == y.shape and np.array_equal(x, y))

    return (
        same(a.eq_lhs, b.eq_lhs)
        and same(a.eq_rhs, b.eq_rhs)
        and same(a.ineq_lhs, b.ineq_lhs)
        and same(a.ineq_rhs, b.ineq_rhs)
    )


def solve_all(
    lps: Sequence[LpProblem], pivot_tol: float = PIVOT_TOL, feas_tol: float = FEAS_TOL
) -> list[LpOutcome]:
    """Solve a batch, sharing presolve and phase one across LPs with identical constraints.

    Results equal those of calling :func:`solve` on each LP separately.
    """
    outcomes: list[LpOutcome | None] = [None] * len(lps)
    groups: list[list[int]] = []
    for k, lp in enumerate(lps):
        for g in groups:
            if _same_constraints(lps[g[0]], lp):
                g.append(k)
                break
        else:
            groups.append([k])
    for g in groups:
        for k, outcome in zip(g, _solve_group([lps[k] for k in g], pivot_tol, feas_tol)):
            outcomes[k] = outcome
    return outcomes  # type: ignore[return-value]
