"""The auxiliary min-max drain-rate LP, its closed form and its dual.

The program is: minimize f over (vbar, f) subject to R.vbar <= f*u,
u^T.vbar = 1, vbar >= 0. A dense two-phase simplex (Bland's rule, no external
solver) handles the general case at desk scale; when R^-1.u and (R^T)^-1.u
are sign-consistent the closed form vbar* = R^-1.u / (u^T.R^-1.u),
f* = 1 / (u^T.R^-1.u) applies and the dual certificate uses (R^T)^-1.u.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditionsNotMet, DimensionError, InfeasibleLP, UnboundedLP, ValidationError


@dataclass(frozen=True)
class Tolerances:
    """Numeric tolerances used throughout the LP layer."""

    equality: float = 1e-8
    feasibility: float = 1e-9
    singularity: float = 1e-12


TOLS = Tolerances()

UNBOUNDED_REGIME = "unbounded-regime"
CRITICAL_REGIME = "critical-regime"


@dataclass(frozen=True)
class LpSolution:
    """Optimal active-time fractions and objective of the auxiliary LP."""

    v_star: np.ndarray
    f_star: float
    attained_by: str  # "closed_form" or "simplex"


@dataclass(frozen=True)
class DualSolution:
    lam: np.ndarray
    w: float


# ---------------------------------------------------------------------------
# Dense two-phase simplex: min c.x  s.t.  A_ub.x <= b_ub, A_eq.x = b_eq, x >= 0
# ---------------------------------------------------------------------------


def solve_lp(
    c: np.ndarray,
    a_ub: np.ndarray | None = None,
    b_ub: np.ndarray | None = None,
    a_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    *,
    tol: float = 1e-10,
    max_iter: int = 20000,
) -> np.ndarray:
    """Exact-at-desk-scale dense simplex with Bland's anti-cycling rule.
    Returns the optimal x; raises InfeasibleLP / UnboundedLP."""
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    n_ub = 0
    if a_ub is not None:
        a_ub = np.atleast_2d(np.asarray(a_ub, dtype=float))
        b_ub = np.atleast_1d(np.asarray(b_ub, dtype=float))
        n_ub = a_ub.shape[0]
        rows.extend(a_ub)
        rhs.extend(b_ub)
    if a_eq is not None:
        a_eq = np.atleast_2d(np.asarray(a_eq, dtype=float))
        b_eq = np.atleast_1d(np.asarray(b_eq, dtype=float))
        rows.extend(a_eq)
        rhs.extend(b_eq)
    m = len(rows)
    if m == 0:
        raise ValidationError("LP needs at least one constraint")

    # Columns: n structural, n_ub slacks, then artificials as needed.
    a = np.zeros((m, n + n_ub))
    b = np.asarray(rhs, dtype=float)
    for i, row in enumerate(rows):
        a[i, :n] = row
        if i < n_ub:
            a[i, n + i] = 1.0
    neg = b < 0
    a[neg] *= -1.0
    b = np.abs(b)

    # Basis: slack columns where they survived the sign flip, else artificials.
    basis = np.empty(m, dtype=int)
    art_cols: list[int] = []
    extra: list[np.ndarray] = []
    for i in range(m):
        if i < n_ub and not neg[i]:
            basis[i] = n + i
        else:
            col = np.zeros(m)
            col[i] = 1.0
            extra.append(col)
            basis[i] = n + n_ub + len(extra) - 1
            art_cols.append(basis[i])
    if extra:
        a = np.hstack([a, np.column_stack(extra)])
    n_total = a.shape[1]

    tableau = np.zeros((m + 1, n_total + 1))
    tableau[:m, :n_total] = a
    tableau[:m, -1] = b

    def pivot(t: np.ndarray, row: int, col: int) -> None:
        t[row] /= t[row, col]
        for r in range(t.shape[0]):
            if r != row and t[r, col] != 0.0:
                t[r] -= t[r, col] * t[row]

    def run_simplex(t: np.ndarray, allowed: int) -> None:
        for _ in range(max_iter):
            reduced = t[-1, :allowed]
            candidates = np.nonzero(reduced < -tol)[0]
            if candidates.size == 0:
                return
            col = int(candidates[0])  # Bland: lowest eligible index
            ratios = np.full(m, np.inf)
            positive = t[:m, col] > tol
            ratios[positive] = t[:m, -1][positive] / t[:m, col][positive]
            best = np.min(ratios)
            if not np.isfinite(best):
                raise UnboundedLP("objective unbounded below")
            tie = np.nonzero(ratios <= best + tol)[0]
            row = int(min(tie, key=lambda r: basis[r]))  # Bland on leaving var
            pivot(t, row, col)
            basis[row] = col
        raise RuntimeError("simplex iteration limit hit")

    if art_cols:
        # Phase 1: minimize the sum of artificials.
        tableau[-1, :] = 0.0
        for col in art_cols:
            tableau[-1, col] = 1.0
        for i in range(m):
            if basis[i] in art_cols:
                tableau[-1] -= tableau[i]
        run_simplex(tableau, n_total)
        if tableau[-1, -1] < -1e-7:
            raise InfeasibleLP("phase 1 could not zero the artificials")
        # Drive remaining artificials out of the basis where possible.
        for i in range(m):
            if basis[i] in art_cols:
                nonzero = np.nonzero(np.abs(tableau[i, : n + n_ub]) > tol)[0]
                if nonzero.size:
                    pivot(tableau, i, int(nonzero[0]))
                    basis[i] = int(nonzero[0])

    # Phase 2 on the original objective, artificial columns frozen out.
    tableau[-1, :] = 0.0
    tableau[-1, :n] = c
    for i in range(m):
        if tableau[-1, basis[i]] != 0.0:
            tableau[-1] -= tableau[-1, basis[i]] * tableau[i]
    run_simplex(tableau, n + n_ub)

    x = np.zeros(n_total)
    for i in range(m):
        x[basis[i]] = tableau[i, -1]
    return x[:n]


# ---------------------------------------------------------------------------
# The auxiliary program
# ---------------------------------------------------------------------------


def _as_square(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise DimensionError(f"residual matrix must be square, got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValidationError("residual matrix entries must be finite")
    return r


def check_primal(r: np.ndarray, sol: LpSolution, tol: float = TOLS.feasibility) -> bool:
    """Feasibility certificate, independent of how the solution was produced."""
    v, f = sol.v_star, sol.f_star
    return (
        bool(np.all(v >= -tol))
        and abs(float(v.sum()) - 1.0) <= tol
        and bool(np.all(r @ v <= f + tol))
    )


def check_dual(r: np.ndarray, dual: DualSolution, tol: float = TOLS.feasibility) -> bool:
    lam, w = dual.lam, dual.w
    return (
        bool(np.all(lam >= -tol))
        and abs(float(lam.sum()) - 1.0) <= tol
        and bool(np.all(r.T @ lam >= w - tol))
    )


def solve_auxiliary_lp(r: np.ndarray) -> LpSolution:
    """Exact simplex solve of the auxiliary LP; degenerate optima resolve to
    the lexicographically smallest optimal vertex."""
    r = _as_square(r)
    m = r.shape[0]
    if m == 1:
        return LpSolution(v_star=np.array([1.0]), f_star=float(r[0, 0]), attained_by="simplex")
    # Variables: [v_0..v_{m-1}, f_pos, f_neg]; f = f_pos - f_neg.
    n = m + 2
    cost = np.zeros(n)
    cost[m], cost[m + 1] = 1.0, -1.0
    a_ub = np.hstack([r, -np.ones((m, 1)), np.ones((m, 1))])
    b_ub = np.zeros(m)
    a_eq = np.zeros((1, n))
    a_eq[0, :m] = 1.0
    b_eq = np.array([1.0])

    x = solve_lp(cost, a_ub, b_ub, a_eq, b_eq)
    f_star = float(x[m] - x[m + 1])

    # Lexicographic refinement: pin f at f*, then minimize v_0, v_1, ... in turn.
    pin_slack = 1e-11
    ub_rows = [a_ub]
    ub_rhs = [b_ub]
    frow = np.zeros(n)
    frow[m], frow[m + 1] = 1.0, -1.0
    ub_rows.append(frow[None, :])
    ub_rhs.append(np.array([f_star + pin_slack]))
    v = x[:m]
    for k in range(m):
        ck = np.zeros(n)
        ck[k] = 1.0
        xk = solve_lp(ck, np.vstack(ub_rows), np.concatenate(ub_rhs), a_eq, b_eq)
        v = xk[:m]
        pin = np.zeros(n)
        pin[k] = 1.0
        ub_rows.append(pin[None, :])
        ub_rhs.append(np.array([float(v[k]) + pin_slack]))
    v = np.maximum(v, 0.0)
    v /= v.sum()
    f_star = float(np.max(r @ v))
    sol = LpSolution(v_star=v, f_star=f_star, attained_by="simplex")
    if not check_primal(r, sol):
        raise RuntimeError("simplex returned an infeasible auxiliary-LP solution")
    return sol


def _signed_solve(matrix: np.ndarray, name: str) -> np.ndarray:
    """Solve M.x = u and require x to be componentwise >= 0 or <= 0."""
    m = matrix.shape[0]
    if np.linalg.cond(matrix) > 1.0 / TOLS.singularity:
        raise ConditionsNotMet(f"{name} is singular or near-singular")
    x = np.linalg.solve(matrix, np.ones(m))
    if not (np.all(x >= -TOLS.feasibility) or np.all(x <= TOLS.feasibility)):
        raise ConditionsNotMet(f"{name}^-1 u has mixed signs")
    return x


def closed_form_solution(r: np.ndarray) -> LpSolution:
    """Closed-form optimum vbar* = R^-1.u / (u^T.R^-1.u), f* = 1/(u^T.R^-1.u).

    Requires R invertible with R^-1.u sign-consistent, and (R^T)^-1.u
    sign-consistent (the dual-feasibility consequence of condition D4).
    Raises ConditionsNotMet naming the failed precondition otherwise.
    """
    r = _as_square(r)
    x = _signed_solve(r, "R")
    _signed_solve(r.T, "R^T")
    denom = float(x.sum())
    if abs(denom) < TOLS.singularity:
        raise ConditionsNotMet("u^T R^-1 u is numerically zero")
    v = x / denom
    sol = LpSolution(v_star=v, f_star=1.0 / denom, attained_by="closed_form")
    if not check_primal(r, sol):
        raise ConditionsNotMet("closed-form candidate failed the feasibility certificate")
    return sol


def dual_solution(r: np.ndarray) -> DualSolution:
    """Optimal dual multipliers lambda = (R^T)^-1.u / (u^T (R^T)^-1.u) with
    w equal to the primal optimum (strong duality)."""
    r = _as_square(r)
    _signed_solve(r, "R")
    y = _signed_solve(r.T, "R^T")
    denom = float(y.sum())
    if abs(denom) < TOLS.singularity:
        raise ConditionsNotMet("u^T (R^T)^-1 u is numerically zero")
    dual = DualSolution(lam=y / denom, w=1.0 / denom)
    if not check_dual(r, dual):
        raise ConditionsNotMet("dual candidate failed the feasibility certificate")
    return dual


def sherman_morrison_check(c_entries: np.ndarray, sbar: np.ndarray) -> float:
    """Infinity norm of the difference between the directly computed
    (R^T)^-1.u and the rank-one update identity
    (C^T)^-1.u / (1 - u^T C^-1 sbar), with R = C - sbar.u^T."""
    c = _as_square(c_entries)
    sbar = np.asarray(sbar, dtype=float)
    if sbar.shape != (c.shape[0],):
        raise DimensionError(f"sbar has shape {sbar.shape}, expected ({c.shape[0]},)")
    m = c.shape[0]
    u = np.ones(m)
    if np.linalg.cond(c) > 1.0 / TOLS.singularity:
        raise ConditionsNotMet("C is singular or near-singular")
    r = c - np.outer(sbar, u)
    if np.linalg.cond(r) > 1.0 / TOLS.singularity:
        raise ConditionsNotMet("R is singular or near-singular")
    denom = 1.0 - float(u @ np.linalg.solve(c, sbar))
    if abs(denom) < TOLS.singularity:
        raise ConditionsNotMet("1 - u^T C^-1 sbar is numerically zero")
    direct = np.linalg.solve(r.T, u)
    via_identity = np.linalg.solve(c.T, u) / denom
    return float(np.max(np.abs(direct - via_identity)))


def predicted_lifetime(e0: float, tau: float, f_star: float) -> float | str:
    """Theorem-scale lifetime prediction e0 / (tau * f*). Returns the
    ``unbounded-regime`` sentinel for f* < 0 and ``critical-regime`` when f*
    is numerically zero (the theorems say nothing there)."""
    if e0 < 0 or tau <= 0:
        raise ValidationError("need e0 >= 0 and tau > 0")
    if abs(f_star) < TOLS.singularity:
        return CRITICAL_REGIME
    if f_star < 0:
        return UNBOUNDED_REGIME
    return e0 / (tau * f_star)
