"""Dense simplex LP solver and zero-sum matrix games.

The solver works on a condensed (dictionary) tableau, so its size is
``(rows + 1) x (columns + 1)`` regardless of how many slacks are implied.
Pivoting follows Bland's rule throughout, which rules out cycling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-11
FEAS_SNAP = 1e-9


class LpFailure(RuntimeError):
    pass


@dataclass
class LinearProgram:
    """maximize c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub."""

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = len(self.c)
        self.A_ub = np.zeros((0, n)) if self.A_ub is None else np.asarray(self.A_ub, float).reshape(-1, n)
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, float)
        self.A_eq = np.zeros((0, n)) if self.A_eq is None else np.asarray(self.A_eq, float).reshape(-1, n)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, float)
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, float)
        if len(self.b_ub) != len(self.A_ub) or len(self.b_eq) != len(self.A_eq):
            raise ValueError("constraint matrix and right-hand side lengths differ")
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("bounds must have one entry per variable")
        if not np.isfinite(self.lb).all():
            raise ValueError("lower bounds must be finite")
        if (self.lb > self.ub).any():
            raise ValueError("lower bound exceeds upper bound")


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded
    value: float = np.nan
    x: np.ndarray | None = None
    y_ub: np.ndarray | None = None  # multipliers of A_ub rows (>= 0)
    y_eq: np.ndarray | None = None  # multipliers of A_eq rows (free)
    y_bound: np.ndarray | None = None  # multipliers of finite upper bounds (>= 0)
    pivots: int = 0


def _pivot(D, basis, nonbasis, r, e):
    """Exchange basic row ``r`` with nonbasic column ``e`` (1-based into D's columns)."""
    a = D[r, e]
    col = D[:, e].copy()
    row = D[r].copy()
    # x_leave = row[0] + sum row[j] x_j  ->  x_enter = (x_leave - row[0] - sum_{j!=e} row[j] x_j) / a
    new_row = -row / a
    new_row[e] = 1.0 / a
    D += np.outer(col, new_row)
    D[:, e] = col / a
    D[r] = new_row
    D[r, e] = 1.0 / a
    basis[r], nonbasis[e - 1] = nonbasis[e - 1], basis[r]


def _bland(D, basis, nonbasis, max_pivots, tol=1e-10):
    """Run Bland-rule pivots until optimal or unbounded; the objective is D's last row."""
    m = D.shape[0] - 1
    pivots = 0
    while True:
        obj = D[m, 1:]
        cand = np.nonzero(obj > tol)[0]
        if len(cand) == 0:
            return "optimal", pivots
        e = 1 + cand[np.argmin(np.asarray(nonbasis)[cand])]
        colv = D[:m, e]
        rows = np.nonzero(colv < -PIVOT_TOL)[0]
        if len(rows) == 0:
            return "unbounded", pivots
        ratios = D[rows, 0] / -colv[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12]
        r = tied[np.argmin(np.asarray(basis)[tied])]
        _pivot(D, basis, nonbasis, r, e)
        # the dictionary is primal feasible here; rounding can push a degenerate
        # basic value a hair below zero, and Bland's rule then loses its guarantee
        vals = D[:m, 0]
        vals[(vals < 0) & (vals > -FEAS_SNAP)] = 0.0
        pivots += 1
        if pivots > max_pivots:
            raise LpFailure(f"no convergence after {max_pivots} pivots")


def solve_lp(lp: LinearProgram, max_pivots: int = 50000) -> LpResult:
    c, lb, ub = lp.c, lp.lb, lp.ub
    n = len(c)
    fin = np.nonzero(np.isfinite(ub))[0]
    # rows: A_ub, A_eq, -A_eq, upper bounds; all in shifted variables x' = x - lb
    A = np.vstack([lp.A_ub, lp.A_eq, -lp.A_eq, np.eye(n)[fin]])
    b = np.concatenate([
        lp.b_ub - lp.A_ub @ lb,
        lp.b_eq - lp.A_eq @ lb,
        -(lp.b_eq - lp.A_eq @ lb),
        (ub - lb)[fin],
    ])
    m = len(b)
    # dictionary: slack_i = b_i - A_i x
    D = np.zeros((m + 1, n + 1))
    D[:m, 0] = b
    D[:m, 1:] = -A
    basis = list(range(n, n + m))
    nonbasis = list(range(n))
    pivots = 0
    if m and b.min() < -1e-12:
        # Phase 1 with one auxiliary variable x0 (id n + m): maximize -x0
        D = np.hstack([D, np.zeros((m + 1, 1))])
        D[:m, -1] = 1.0
        D[m, :] = 0.0
        D[m, -1] = -1.0
        nonbasis.append(n + m)
        r = int(np.argmin(D[:m, 0]))
        _pivot(D, basis, nonbasis, r, D.shape[1] - 1)
        status, k = _bland(D, basis, nonbasis, max_pivots)
        pivots += k + 1
        if D[m, 0] < -1e-9:
            return LpResult("infeasible", pivots=pivots)
        if n + m in basis:
            r = basis.index(n + m)
            cols = np.nonzero(np.abs(D[r, 1:]) > PIVOT_TOL)[0]
            cols = [j for j in cols if nonbasis[j] != n + m]
            if not cols:
                raise LpFailure("auxiliary variable stuck in the basis")
            e = 1 + min(cols, key=lambda j: nonbasis[j])
            _pivot(D, basis, nonbasis, r, e)
        j = nonbasis.index(n + m)
        D = np.delete(D, j + 1, axis=1)
        del nonbasis[j]
    # objective in terms of the current nonbasic variables
    D[m, :] = 0.0
    D[m, 0] = c @ lb
    for i, v in enumerate(basis):
        if v < n and c[v] != 0:
            D[m] += c[v] * D[i]
    for j, v in enumerate(nonbasis):
        if v < n:
            D[m, j + 1] += c[v]
    status, k = _bland(D, basis, nonbasis, max_pivots)
    pivots += k
    if status == "unbounded":
        return LpResult("unbounded", pivots=pivots)
    x = np.zeros(n)
    for i, v in enumerate(basis):
        if v < n:
            x[v] = D[i, 0]
    x = x + lb
    y = np.zeros(m)
    for j, v in enumerate(nonbasis):
        if v >= n:
            y[v - n] = -D[m, j + 1]
    k1, k2 = len(lp.b_ub), len(lp.b_eq)
    y_ub = y[:k1]
    y_eq = y[k1:k1 + k2] - y[k1 + k2:k1 + 2 * k2]
    y_bound = np.zeros(n)
    y_bound[fin] = y[k1 + 2 * k2:]
    return LpResult("optimal", float(c @ x), x, y_ub, y_eq, y_bound, pivots)


def kkt_residuals(lp: LinearProgram, res: LpResult) -> dict[str, float]:
    """Primal/dual feasibility, complementary slackness and duality gap of an optimal result."""
    x = res.x
    primal = max(
        np.max(lp.A_ub @ x - lp.b_ub, initial=0.0),
        np.max(np.abs(lp.A_eq @ x - lp.b_eq), initial=0.0),
        np.max(lp.lb - x, initial=0.0),
        np.max(np.where(np.isfinite(lp.ub), x - lp.ub, 0.0), initial=0.0),
    )
    # reduced costs: c - A_ub^T y - A_eq^T z - y_bound must be <= 0, and = 0 where x > lb
    red = lp.c - lp.A_ub.T @ res.y_ub - lp.A_eq.T @ res.y_eq - res.y_bound
    dual = max(np.max(red, initial=0.0), np.max(-res.y_ub, initial=0.0), np.max(-res.y_bound, initial=0.0))
    slack = lp.b_ub - lp.A_ub @ x
    ub_slack = np.where(np.isfinite(lp.ub), lp.ub - x, 0.0)
    comp = max(
        np.max(np.abs(res.y_ub * slack), initial=0.0),
        np.max(np.abs(res.y_bound * ub_slack), initial=0.0),
        np.max(np.abs(red * (x - lp.lb)), initial=0.0),
    )
    finite_ub = np.where(np.isfinite(lp.ub), lp.ub, 0.0)
    dual_value = (
        res.y_ub @ lp.b_ub + res.y_eq @ lp.b_eq + res.y_bound @ finite_ub + np.minimum(red, 0.0) @ lp.lb
    )
    return {"primal": primal, "dual": dual, "complementarity": comp, "gap": abs(dual_value - res.value)}


@dataclass
class GameSolution:
    value: float
    row: np.ndarray
    col: np.ndarray


def pure_saddle(A: np.ndarray):
    """Return (value, i, j) of a pure saddle point, or None."""
    row_min = A.min(axis=1)
    col_max = A.max(axis=0)
    lower, upper = row_min.max(), col_max.min()
    if upper - lower > 1e-13:
        return None
    return float(lower), int(np.argmax(row_min)), int(np.argmin(col_max))


def game_value(A: np.ndarray, check_pure: bool = True) -> GameSolution:
    """Value and optimal mixed strategies of the zero-sum game ``A`` (rows maximize)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or 0 in A.shape:
        raise ValueError("payoff matrix must be a nonempty 2-d array")
    if not np.isfinite(A).all():
        raise ValueError("payoff matrix has non-finite entries")
    m, n = A.shape
    if check_pure:
        sp = pure_saddle(A)
        if sp is not None:
            v, i, j = sp
            return GameSolution(v, np.eye(m)[i], np.eye(n)[j])
    lo, hi = A.min(), A.max()
    # variables (x_1..x_m, v); maximize v s.t. v - x^T A e_j <= 0, sum x = 1
    c = np.zeros(m + 1)
    c[-1] = 1.0
    A_ub = np.hstack([-A.T, np.ones((n, 1))])
    lp = LinearProgram(
        c, A_ub, np.zeros(n), np.append(np.ones(m), 0.0)[None, :], np.ones(1),
        lb=np.append(np.zeros(m), lo - 1.0), ub=np.append(np.full(m, np.inf), hi + 1.0),
    )
    res = solve_lp(lp)
    if res.status != "optimal":
        raise LpFailure(f"matrix game LP ended {res.status}")
    x = np.clip(res.x[:m], 0, None)
    y = np.clip(res.y_ub, 0, None)
    return GameSolution(res.value, x / x.sum(), y / y.sum())


def batch_game_values(A: np.ndarray, row_ok: np.ndarray | None = None, col_ok: np.ndarray | None = None,
                      max_pivots: int = 1000):
    """Solve many small zero-sum games at once.

    ``A`` has shape ``(B, R, C)``; ``row_ok``/``col_ok`` mark the playable
    rows and columns of each game. Each game is shifted to positive payoffs
    and solved as ``max 1.q  s.t.  A' q <= 1, q >= 0`` (column player), with
    Bland's rule applied independently per game. Returns values, row
    strategies ``(B, R)`` and column strategies ``(B, C)``.
    """
    A = np.asarray(A, dtype=float)
    B, R, C = A.shape
    row_ok = np.ones((B, R), bool) if row_ok is None else np.asarray(row_ok, bool)
    col_ok = np.ones((B, C), bool) if col_ok is None else np.asarray(col_ok, bool)
    if not (row_ok.any(axis=1).all() and col_ok.any(axis=1).all()):
        raise ValueError("every game needs at least one playable row and column")
    if B == 0:
        return np.zeros(0), np.zeros((0, R)), np.zeros((0, C))
    ok = row_ok[:, :, None] & col_ok[:, None, :]
    lo = np.where(ok, A, np.inf).min(axis=(1, 2))
    shift = 1.0 - lo
    Ap = np.where(ok, A + shift[:, None, None], 0.0)
    # dictionary rows: slacks (ids C..C+R-1), last row objective; columns: rhs, nonbasic vars
    D = np.zeros((B, R + 1, C + 1))
    D[:, :R, 0] = 1.0
    D[:, :R, 1:] = -Ap
    D[:, R, 1:] = col_ok.astype(float)
    basis = np.tile(np.arange(C, C + R), (B, 1))
    nonbasis = np.tile(np.arange(C), (B, 1))
    active = np.ones(B, bool)
    big = np.iinfo(np.int64).max
    for _ in range(max_pivots):
        obj = D[:, R, 1:]
        cand = obj > 1e-12
        active &= cand.any(axis=1)
        idx = np.nonzero(active)[0]
        if len(idx) == 0:
            break
        e = np.argmin(np.where(cand[idx], nonbasis[idx], big), axis=1)
        colv = D[idx, :R, 1 + e]  # (b, R)
        neg = colv < -PIVOT_TOL
        if not neg.any(axis=1).all():
            raise LpFailure("unbounded game LP")
        ratio = np.where(neg, D[idx, :R, 0] / np.where(neg, -colv, 1.0), np.inf)
        best = ratio.min(axis=1, keepdims=True)
        tied = ratio <= best + 1e-12
        r = np.argmin(np.where(tied, basis[idx], big), axis=1)
        # vectorized pivot
        Dk = D[idx]
        a = Dk[np.arange(len(idx)), r, 1 + e]
        col = Dk[np.arange(len(idx)), :, 1 + e].copy()
        row = Dk[np.arange(len(idx)), r, :].copy()
        new_row = -row / a[:, None]
        new_row[np.arange(len(idx)), 1 + e] = 1.0 / a
        Dk += col[:, :, None] * new_row[:, None, :]
        Dk[np.arange(len(idx)), :, 1 + e] = col / a[:, None]
        Dk[np.arange(len(idx)), r, :] = new_row
        rhs = Dk[:, :R, 0]
        rhs[(rhs < 0) & (rhs > -FEAS_SNAP)] = 0.0
        D[idx] = Dk
        leaving = basis[idx, r].copy()
        basis[idx, r] = nonbasis[idx, e]
        nonbasis[idx, e] = leaving
    else:
        raise LpFailure(f"batched game LP did not converge in {max_pivots} pivots")
    total = D[:, R, 0]
    q = np.zeros((B, C))
    bi, br = np.nonzero(basis < C)
    q[bi, basis[bi, br]] = D[bi, br, 0]
    p = np.zeros((B, R))
    ni, nj = np.nonzero(nonbasis >= C)
    p[ni, nonbasis[ni, nj] - C] = -D[ni, R, 1 + nj]
    p = np.clip(p, 0, None)
    q = np.clip(q, 0, None)
    values = 1.0 / total - shift
    return values, p / p.sum(axis=1, keepdims=True), q / q.sum(axis=1, keepdims=True)
