"""Mixed-integer linear programming: model, solvers and LP export."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ModelError
from .bnb import solve_bnb
from .lpformat import export_lp_text
from .model import (
    BINARY,
    CONTINUOUS,
    Constraint,
    LinExpr,
    MilpModel,
    SolveResult,
    Status,
    VarRef,
)

__all__ = [
    "BINARY",
    "CONTINUOUS",
    "Budget",
    "Constraint",
    "LinExpr",
    "MilpModel",
    "SolveResult",
    "Status",
    "Tolerances",
    "VarRef",
    "add_conjunction",
    "export_lp_text",
    "solve",
]

# above this many binaries "auto" hands the model to HiGHS
AUTO_BINARY_LIMIT = 40


@dataclass(frozen=True)
class Budget:
    max_nodes: int | None = None
    max_seconds: float | None = None


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-7
    integrality: float = 1e-6
    gap: float = 1e-6


def solve(
    model: MilpModel,
    budget: Budget | None = None,
    tolerances: Tolerances | None = None,
    backend: str = "bnb",
    hint=None,
) -> SolveResult:
    """Minimise ``model``.

    ``backend`` is ``"bnb"`` (the built-in branch and bound), ``"highs"`` or
    ``"auto"`` (built-in for small models, HiGHS otherwise). ``hint`` is an
    optional feasible assignment offered to HiGHS as a starting incumbent.
    """
    budget = budget or Budget()
    tol = tolerances or Tolerances()
    if backend == "auto":
        backend = "bnb" if int(model.is_binary.sum()) <= AUTO_BINARY_LIMIT and model.n_vars <= 200 else "highs"
    if backend == "bnb":
        return solve_bnb(model, budget.max_nodes, budget.max_seconds, tol.integrality, tol.gap)
    if backend == "highs":
        from .highs import solve_highs

        return solve_highs(
            model,
            budget.max_nodes,
            budget.max_seconds,
            tol.integrality,
            tol.gap,
            tol.feasibility,
            hint=hint,
        )
    raise ModelError(f"unknown backend {backend!r}")


def add_conjunction(model: MilpModel, out: VarRef, ins, tag: str = "and") -> None:
    """Constrain binary ``out`` to equal the AND of ``ins``.

    Items of ``ins`` are binary variables, linear expressions taking values in
    {0, 1}, or the constants 0 and 1.
    """
    ins = list(ins)
    if not ins:
        raise ModelError("conjunction needs at least one input")
    consts = [x for x in ins if isinstance(x, (int, float, np.integer, np.floating))]
    for c in consts:
        if c not in (0, 1):
            raise ModelError(f"constant conjunction input must be 0 or 1, got {c}")
    if any(c == 0 for c in consts):
        model.fix(out, 0.0)
        return
    terms = [x for x in ins if not isinstance(x, (int, float, np.integer, np.floating))]
    if not terms:
        model.fix(out, 1.0)
        return
    for i, x in enumerate(terms):
        model.add_constraint(LinExpr.of(out) - x, "<=", 0.0, f"{tag}_le{i}")
    model.add_constraint(LinExpr.of(out) - LinExpr.total(terms), ">=", 1.0 - len(terms), f"{tag}_ge")
