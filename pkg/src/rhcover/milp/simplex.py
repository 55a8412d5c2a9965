"""Dense two-phase primal simplex with bounded variables.

Used for the LP relaxations inside :mod:`rhcover.milp.bnb`. Nonbasic
variables sit at either bound; a ratio test may end in a bound flip instead
of a pivot. Pricing is Dantzig's rule; after ``10 * n`` consecutive
degenerate pivots it switches to Bland's rule until progress resumes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

PIVOT_TOL = 1e-9
OPT_TOL = 1e-9
FEAS_TOL = 1e-7


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int


class _Tableau:
    def __init__(self, T, beta, basis, ub, cost):
        self.T = T  # (m, N) = B^-1 A
        self.beta = beta  # basic values
        self.basis = basis  # (m,) column ids
        self.ub = ub  # (N,) upper bounds of the shifted columns (lower is 0)
        self.at_upper = np.zeros(T.shape[1], dtype=bool)
        self.is_basic = np.zeros(T.shape[1], dtype=bool)
        self.is_basic[basis] = True
        self.set_cost(cost)
        self.iterations = 0

    def set_cost(self, cost):
        self.cost = cost
        self.d = cost - cost[self.basis] @ self.T

    def values(self):
        y = np.where(self.at_upper, self.ub, 0.0)
        y[self.basis] = self.beta
        return y

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.d -= self.d[j] * T[r]
        leaving = self.basis[r]
        self.is_basic[leaving] = False
        self.is_basic[j] = True
        self.basis[r] = j

    def run(self, eligible, max_iter):
        """Primal simplex on the current cost; returns a status string."""
        m, n = self.T.shape
        degenerate = 0
        bland = False
        limit_degenerate = 10 * n
        while True:
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            d = self.d
            free = eligible & ~self.is_basic
            inc = free & ~self.at_upper & (d < -OPT_TOL)
            dec = free & self.at_upper & (d > OPT_TOL)
            cand = np.nonzero(inc | dec)[0]
            if cand.size == 0:
                return OPTIMAL
            if bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            s = 1.0 if inc[j] else -1.0
            col = self.T[:, j] * s
            # basic i moves by -col[i] * t
            t_best = self.ub[j]
            r_best = -1
            to_upper = False
            beta = self.beta
            ubB = self.ub[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                down = col > PIVOT_TOL
                up = (col < -PIVOT_TOL) & np.isfinite(ubB)
                ratio = np.full(m, np.inf)
                ratio[down] = np.maximum(beta[down], 0.0) / col[down]
                ratio[up] = np.maximum(ubB[up] - beta[up], 0.0) / -col[up]
            if m:
                t_row = ratio.min()
                if np.isfinite(t_row) and t_row <= t_best:
                    ties = np.nonzero(ratio <= t_row + 1e-12)[0]
                    if bland:
                        r_best = int(ties[np.argmin(self.basis[ties])])
                    else:
                        r_best = int(ties[np.argmax(np.abs(col[ties]))])
                    t_best = ratio[r_best]
                    to_upper = bool(up[r_best])
            if not np.isfinite(t_best):
                return UNBOUNDED
            self.iterations += 1
            if t_best <= 1e-12:
                degenerate += 1
                if degenerate > limit_degenerate:
                    bland = True
            else:
                degenerate = 0
                bland = False
            self.beta -= t_best * col
            if r_best < 0:
                self.at_upper[j] = not self.at_upper[j]
                continue
            entering_value = (self.ub[j] if self.at_upper[j] else 0.0) + s * t_best
            leaving = self.basis[r_best]
            self.pivot(r_best, j)
            self.beta[r_best] = entering_value
            self.at_upper[j] = False
            self.at_upper[leaving] = to_upper
            # keep basics inside their box against round-off
            np.clip(self.beta, 0.0, self.ub[self.basis], out=self.beta)


def solve_lp(c, A, row_lo, row_hi, lb, ub, max_iter: int | None = None) -> LPResult:
    """Minimise ``c.x`` subject to ``row_lo <= A x <= row_hi`` and ``lb <= x <= ub``.

    ``A`` is a dense array. Infinite bounds are allowed on both rows and columns.
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    A = np.asarray(A, dtype=float).reshape(-1, n) if n else np.zeros((0, 0))
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if np.any(lb > ub + FEAS_TOL):
        return LPResult(INFEASIBLE, None, np.inf, 0)

    # column map: x = shift + M y, y >= 0
    shift, col_ub, col_sign, col_src = np.zeros(n), [], [], []
    for k in range(n):
        if np.isfinite(lb[k]):
            shift[k] = lb[k]
            col_src.append(k)
            col_sign.append(1.0)
            col_ub.append(ub[k] - lb[k])
        elif np.isfinite(ub[k]):
            shift[k] = ub[k]
            col_src.append(k)
            col_sign.append(-1.0)
            col_ub.append(np.inf)
        else:
            col_src += [k, k]
            col_sign += [1.0, -1.0]
            col_ub += [np.inf, np.inf]
    col_src = np.array(col_src, dtype=int)
    col_sign = np.array(col_sign)
    ny = len(col_src)
    Ay = A[:, col_src] * col_sign
    cy = c[col_src] * col_sign
    base = A @ shift

    # rows: split ranged/equality rows into the form  a.y + s = b
    rows, rhs, slack = [], [], []
    for i in range(A.shape[0]):
        lo, hi = row_lo[i] - base[i], row_hi[i] - base[i]
        if lo == hi:
            rows.append(Ay[i]); rhs.append(hi); slack.append(0.0)
            continue
        if np.isfinite(hi):
            rows.append(Ay[i]); rhs.append(hi); slack.append(1.0)
        if np.isfinite(lo):
            rows.append(Ay[i]); rhs.append(lo); slack.append(-1.0)
    m = len(rows)
    if m == 0:
        # only bounds: each column at its cheaper bound
        y = np.zeros(ny)
        yu = np.array(col_ub)
        neg = cy < 0
        if np.any(neg & ~np.isfinite(yu)):
            return LPResult(UNBOUNDED, None, -np.inf, 0)
        y[neg] = yu[neg]
        x = shift + np.bincount(col_src, weights=col_sign * y, minlength=n)
        return LPResult(OPTIMAL, x, float(c @ x), 0)

    R = np.array(rows)
    b = np.array(rhs)
    slack = np.array(slack)
    n_slack = int(np.count_nonzero(slack))
    S = np.zeros((m, n_slack))
    slack_rows = np.nonzero(slack)[0]
    S[slack_rows, np.arange(n_slack)] = slack[slack_rows]
    neg = b < 0
    R[neg] *= -1.0
    S[neg] *= -1.0
    b = np.abs(b)

    # slack with +1 coefficient can start basic; other rows get an artificial
    basis = np.full(m, -1)
    for col, r in enumerate(slack_rows):
        if S[r, col] > 0:
            basis[r] = ny + col
    need = np.nonzero(basis < 0)[0]
    n_art = len(need)
    Art = np.zeros((m, n_art))
    Art[need, np.arange(n_art)] = 1.0
    basis[need] = ny + n_slack + np.arange(n_art)

    T = np.hstack([R, S, Art])
    N = T.shape[1]
    ubs = np.concatenate([np.array(col_ub), np.full(n_slack, np.inf), np.full(n_art, np.inf)])
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000
    cost1 = np.zeros(N)
    cost1[ny + n_slack:] = 1.0
    tab = _Tableau(T, b.copy(), basis, ubs, cost1)
    eligible = np.ones(N, dtype=bool)

    if n_art:
        status = tab.run(eligible, max_iter)
        if status == ITERATION_LIMIT:
            return LPResult(status, None, np.nan, tab.iterations)
        infeas = float(tab.values()[ny + n_slack:].sum())
        if infeas > FEAS_TOL:
            return LPResult(INFEASIBLE, None, np.inf, tab.iterations)
        # drive zero-level artificials out of the basis where possible
        art = np.arange(ny + n_slack, N)
        for r in range(m):
            if tab.basis[r] >= ny + n_slack:
                row = np.abs(tab.T[r, : ny + n_slack])
                row[tab.is_basic[: ny + n_slack]] = 0.0
                j = int(np.argmax(row)) if row.size else 0
                if row.size and row[j] > PIVOT_TOL:
                    value = tab.ub[j] if tab.at_upper[j] else 0.0
                    leaving = tab.basis[r]
                    tab.pivot(r, j)
                    tab.beta[r] = value
                    tab.at_upper[j] = False
                    tab.at_upper[leaving] = False
        eligible[art] = False
        tab.ub[art] = 0.0
        tab.at_upper[art] = False

    cost2 = np.concatenate([cy, np.zeros(n_slack + n_art)])
    tab.set_cost(cost2)
    status = tab.run(eligible, max_iter)
    if status != OPTIMAL:
        return LPResult(status, None, -np.inf if status == UNBOUNDED else np.nan, tab.iterations)
    y = tab.values()[:ny]
    x = shift + np.bincount(col_src, weights=col_sign * y, minlength=n)
    return LPResult(OPTIMAL, x, float(c @ x), tab.iterations)
