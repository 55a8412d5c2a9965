"""HiGHS backend for models too large for the dense branch and bound."""
from __future__ import annotations

import math
import time

import numpy as np

from ..errors import ModelError
from .model import MilpModel, SolveResult, Status

# above this many binaries a time-limited solve runs without presolve
PRESOLVE_LIMIT = 20_000


def solve_highs(
    model: MilpModel,
    max_nodes: int | None = None,
    max_seconds: float | None = None,
    int_tol: float = 1e-6,
    gap_tol: float = 1e-6,
    feas_tol: float = 1e-7,
    hint: np.ndarray | None = None,
    threads: int = 1,
) -> SolveResult:
    import highspy

    t0 = time.perf_counter()
    form = model.arrays()
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("threads", threads)
    h.setOptionValue("mip_rel_gap", gap_tol)
    h.setOptionValue("mip_feasibility_tolerance", int_tol)
    h.setOptionValue("primal_feasibility_tolerance", feas_tol)
    if max_nodes is not None:
        h.setOptionValue("mip_max_nodes", int(max_nodes))

    inf = highspy.kHighsInf
    n = model.n_vars
    lp = highspy.HighsLp()
    lp.num_col_ = n
    lp.num_row_ = form.A.shape[0]
    lp.col_cost_ = form.c
    lp.offset_ = form.c0
    lp.col_lower_ = np.where(np.isfinite(form.lb), form.lb, -inf)
    lp.col_upper_ = np.where(np.isfinite(form.ub), form.ub, inf)
    lp.row_lower_ = np.where(np.isfinite(form.row_lo), form.row_lo, -inf)
    lp.row_upper_ = np.where(np.isfinite(form.row_hi), form.row_hi, inf)
    A = form.A.tocsc()
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr
    lp.a_matrix_.index_ = A.indices
    lp.a_matrix_.value_ = A.data
    lp.integrality_ = [
        highspy.HighsVarType.kInteger if b else highspy.HighsVarType.kContinuous for b in form.binary
    ]
    h.passModel(lp)
    if hint is not None:
        sol = highspy.HighsSolution()
        sol.col_value = list(np.asarray(hint, dtype=float))
        sol.value_valid = True
        h.setSolution(sol)
    if max_seconds is not None and int(form.binary.sum()) > PRESOLVE_LIMIT:
        # presolve does not poll the clock; on ~50k binaries it overran a 15 s limit by 6 s
        h.setOptionValue("presolve", "off")
    if max_seconds is not None:
        # setup time counts against the budget
        h.setOptionValue("time_limit", max(0.1, float(max_seconds) - (time.perf_counter() - t0)))
    h.run()

    ms = h.getModelStatus()
    info = h.getInfo()
    stats = {
        "backend": "highs",
        "nodes": int(getattr(info, "mip_node_count", 0)),
        "lp_iterations": int(getattr(info, "simplex_iteration_count", 0)),
        "wall_time": time.perf_counter() - t0,
        "deterministic": ms == highspy.HighsModelStatus.kOptimal,
        "model_status": h.modelStatusToString(ms),
    }
    S = highspy.HighsModelStatus
    if ms == S.kInfeasible:
        return SolveResult(Status.INFEASIBLE, None, math.inf, math.inf, stats)
    if ms in (S.kUnbounded, S.kUnboundedOrInfeasible):
        if np.all(np.isfinite(form.lb)) and np.all(np.isfinite(form.ub)):
            return SolveResult(Status.INFEASIBLE, None, math.inf, math.inf, stats)
        raise ModelError("MILP relaxation is unbounded")
    has_primal = info.primal_solution_status == 2  # kSolutionStatusFeasible
    bound = float(getattr(info, "mip_dual_bound", -math.inf))
    if not has_primal:
        if ms == S.kOptimal:
            raise ModelError("HiGHS reported optimal without a primal solution")
        return SolveResult(Status.NO_SOLUTION, None, math.inf, bound, stats)
    x = np.array(h.getSolution().col_value, dtype=float)
    x[form.binary] = np.round(x[form.binary])
    x = np.clip(x, form.lb, form.ub)
    obj = float(form.c @ x) + form.c0
    if ms == S.kOptimal:
        status = Status.OPTIMAL
        if not math.isfinite(bound):
            bound = obj
        bound = min(bound, obj)
    else:
        status = Status.INCUMBENT
    return SolveResult(status, x, obj, bound, stats)
