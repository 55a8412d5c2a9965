"""Best-bound branch and bound over the dense simplex."""
from __future__ import annotations

import heapq
import itertools
import math
import time

import numpy as np

from ..errors import ModelError
from . import simplex
from .model import MilpModel, SolveResult, Status


def _presolve(form):
    """Drop fixed columns (constant propagation) and rows left without columns."""
    fixed = form.ub - form.lb <= 0.0
    keep = np.nonzero(~fixed)[0]
    xfix = np.where(fixed, form.lb, 0.0)
    A = form.A.tocsc()
    base = A[:, np.nonzero(fixed)[0]] @ xfix[fixed] if fixed.any() else np.zeros(A.shape[0])
    Ak = A[:, keep].tocsr()
    lo = form.row_lo - base
    hi = form.row_hi - base
    nnz = np.diff(Ak.indptr)
    empty = nnz == 0
    tol = 1e-7
    if np.any(empty & ((lo > tol) | (hi < -tol))):
        return None
    rows = np.nonzero(~empty)[0]
    return {
        "keep": keep,
        "xfix": xfix,
        "A": Ak[rows].toarray(),
        "lo": lo[rows],
        "hi": hi[rows],
        "c": form.c[keep],
        "c0": form.c0 + float(form.c[fixed] @ xfix[fixed]),
        "lb": form.lb[keep],
        "ub": form.ub[keep],
        "binary": form.binary[keep],
    }


def solve_bnb(
    model: MilpModel,
    max_nodes: int | None = None,
    max_seconds: float | None = None,
    int_tol: float = 1e-6,
    gap_tol: float = 1e-6,
) -> SolveResult:
    t0 = time.perf_counter()
    form = model.arrays()
    if np.any(form.lb > form.ub):
        return SolveResult(Status.INFEASIBLE, None, math.inf, math.inf, {"nodes": 0, "lp_iterations": 0})
    pre = _presolve(form)
    stats = {"nodes": 0, "lp_iterations": 0, "backend": "bnb", "deterministic": True}
    if pre is None:
        stats["wall_time"] = time.perf_counter() - t0
        return SolveResult(Status.INFEASIBLE, None, math.inf, math.inf, stats)

    c, A, lo, hi = pre["c"], pre["A"], pre["lo"], pre["hi"]
    binary = pre["binary"]

    def lp(lb, ub):
        res = simplex.solve_lp(c, A, lo, hi, lb, ub)
        stats["lp_iterations"] += res.iterations
        if res.status == simplex.UNBOUNDED:
            raise ModelError("LP relaxation is unbounded")
        if res.status == simplex.ITERATION_LIMIT:
            raise ModelError("simplex iteration limit reached")
        return res

    def expand(xk):
        x = pre["xfix"].copy()
        x[pre["keep"]] = xk
        return x

    incumbent = None
    inc_val = math.inf
    counter = itertools.count()
    heap: list = []

    def push(lb, ub, depth):
        res = lp(lb, ub)
        if res.status == simplex.INFEASIBLE:
            return
        heapq.heappush(heap, (res.objective, depth, next(counter), lb, ub, res.x))

    def try_incumbent(x):
        nonlocal incumbent, inc_val
        val = float(c @ x)
        if val < inc_val - 1e-12:
            incumbent, inc_val = x, val

    def round_and_fix(x, lb, ub):
        # cheap primal heuristic: fix binaries at their rounded LP values
        lb2, ub2 = lb.copy(), ub.copy()
        r = np.round(x[binary])
        lb2[binary] = np.clip(r, lb[binary], ub[binary])
        ub2[binary] = lb2[binary]
        res = lp(lb2, ub2)
        if res.status == simplex.OPTIMAL:
            try_incumbent(res.x)

    push(pre["lb"].astype(float), pre["ub"].astype(float), 0)
    if heap and binary.any():
        round_and_fix(heap[0][5], heap[0][3], heap[0][4])
    open_bound = math.inf  # best bound among nodes left unexplored
    exhausted = True
    while heap:
        bound, depth, _, lb, ub, x = heapq.heappop(heap)
        if incumbent is not None and inc_val - bound <= gap_tol * max(1.0, abs(inc_val)):
            open_bound = bound
            break
        if (max_nodes is not None and stats["nodes"] >= max_nodes) or (
            max_seconds is not None and time.perf_counter() - t0 > max_seconds
        ):
            open_bound = bound
            exhausted = False
            break
        stats["nodes"] += 1
        xb = x[binary]
        frac = np.abs(xb - np.round(xb))
        if frac.size == 0 or frac.max() <= int_tol:
            try_incumbent(x)
            continue
        # most fractional binary (lowest position on ties)
        k = np.nonzero(binary)[0][int(np.argmax(frac))]
        for v in (0.0, 1.0):
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[k] = ub2[k] = v
            push(lb2, ub2, depth + 1)
        if stats["nodes"] % 50 == 0:
            round_and_fix(x, lb, ub)

    stats["wall_time"] = time.perf_counter() - t0
    c0 = pre["c0"]
    if not exhausted:
        stats["deterministic"] = False
    if incumbent is None:
        if exhausted:
            return SolveResult(Status.INFEASIBLE, None, math.inf, math.inf, stats)
        return SolveResult(Status.NO_SOLUTION, None, math.inf, open_bound + c0, stats)
    x = expand(incumbent)
    x[form.binary] = np.round(x[form.binary])
    obj = float(form.c @ x) + form.c0
    bnd = min(open_bound + c0, obj)
    if exhausted or obj - bnd <= gap_tol * max(1.0, abs(obj)):
        status = Status.OPTIMAL
    else:
        status = Status.INCUMBENT
    return SolveResult(status, x, obj, bnd, stats)
