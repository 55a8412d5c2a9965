"""Linear model representation shared by the solvers and the LP writer."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np
import scipy.sparse as sp

from ..errors import ModelError

CONTINUOUS = "continuous"
BINARY = "binary"


@dataclass(frozen=True)
class VarRef:
    id: int
    kind: str
    name: str

    def __mul__(self, coef) -> "LinExpr":
        return LinExpr({self.id: float(coef)})

    __rmul__ = __mul__

    def __neg__(self) -> "LinExpr":
        return LinExpr({self.id: -1.0})

    def __add__(self, other) -> "LinExpr":
        return LinExpr({self.id: 1.0}) + other

    __radd__ = __add__

    def __sub__(self, other) -> "LinExpr":
        return LinExpr({self.id: 1.0}) - other

    def __rsub__(self, other) -> "LinExpr":
        return LinExpr({self.id: -1.0}) + other


Operand = Union["LinExpr", VarRef, float, int]


class LinExpr:
    """Sum of ``coef * var`` terms plus a constant; one term per variable."""

    __slots__ = ("terms", "constant")

    def __init__(self, terms: dict[int, float] | None = None, constant: float = 0.0):
        self.terms = dict(terms) if terms else {}
        self.constant = float(constant)

    @classmethod
    def of(cls, x: Operand) -> "LinExpr":
        if isinstance(x, LinExpr):
            return x
        if isinstance(x, VarRef):
            return cls({x.id: 1.0})
        return cls(constant=float(x))

    @classmethod
    def total(cls, items: Iterable[Operand]) -> "LinExpr":
        out = cls()
        for it in items:
            out._iadd(cls.of(it), 1.0)
        return out

    def _iadd(self, other: "LinExpr", sign: float) -> None:
        for k, v in other.terms.items():
            self.terms[k] = self.terms.get(k, 0.0) + sign * v
        self.constant += sign * other.constant

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.constant)

    def __add__(self, other: Operand) -> "LinExpr":
        out = self.copy()
        out._iadd(LinExpr.of(other), 1.0)
        return out

    __radd__ = __add__

    def __sub__(self, other: Operand) -> "LinExpr":
        out = self.copy()
        out._iadd(LinExpr.of(other), -1.0)
        return out

    def __rsub__(self, other: Operand) -> "LinExpr":
        return LinExpr.of(other) - self

    def __mul__(self, coef) -> "LinExpr":
        c = float(coef)
        return LinExpr({k: c * v for k, v in self.terms.items()}, c * self.constant)

    __rmul__ = __mul__

    def __neg__(self) -> "LinExpr":
        return self * -1.0

    def value(self, x) -> float:
        return self.constant + sum(c * float(x[k]) for k, c in self.terms.items())

    def __repr__(self):
        return f"LinExpr({self.terms!r}, {self.constant!r})"


@dataclass(frozen=True)
class Constraint:
    expr: LinExpr
    sense: str  # "<=", ">=", "=="
    rhs: float
    tag: str


SENSES = ("<=", ">=", "==")


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INCUMBENT = "Incumbent"
    INFEASIBLE = "Infeasible"
    NO_SOLUTION = "BudgetExhaustedNoSolution"


@dataclass
class SolveResult:
    status: Status
    assignment: np.ndarray | None
    objective_value: float
    bound: float
    stats: dict = field(default_factory=dict)

    @property
    def has_solution(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.INCUMBENT)

    def value(self, v: VarRef | LinExpr) -> float:
        if isinstance(v, VarRef):
            return float(self.assignment[v.id])
        return v.value(self.assignment)


@dataclass
class ArrayForm:
    """``min c.x + c0`` s.t. ``row_lo <= A x <= row_hi``, ``lb <= x <= ub``."""

    c: np.ndarray
    c0: float
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray


class MilpModel:
    """A minimisation MILP over continuous and binary variables.

    Rows are stored in chunks of equal width so that large families of
    constraints can be appended with numpy arrays instead of per-row objects.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self._names: list[str] = []
        self._binary: list[bool] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._chunks: list[tuple[np.ndarray, np.ndarray]] = []
        self._senses: list[str] = []
        self._rhs: list[float] = []
        self.tags: list[str] = []
        self.objective = LinExpr()

    # variables -----------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self._names)

    @property
    def n_constraints(self) -> int:
        return len(self._rhs)

    def add_var(self, name: str, kind: str = CONTINUOUS, lower: float = 0.0, upper: float = math.inf) -> VarRef:
        if kind == BINARY:
            lower, upper = max(0.0, float(lower)), min(1.0, float(upper))
        elif kind != CONTINUOUS:
            raise ModelError(f"unknown variable kind {kind!r}")
        if lower > upper:
            raise ModelError(f"variable {name}: lower bound {lower} > upper bound {upper}")
        self._names.append(name)
        self._binary.append(kind == BINARY)
        self._lb.append(float(lower))
        self._ub.append(float(upper))
        return VarRef(len(self._names) - 1, kind, name)

    def add_vars(self, names: list[str], kind: str = CONTINUOUS, lower=0.0, upper=math.inf) -> np.ndarray:
        """Bulk variant of :meth:`add_var`; returns the new ids."""
        n = len(names)
        lo = np.broadcast_to(np.asarray(lower, dtype=float), (n,))
        hi = np.broadcast_to(np.asarray(upper, dtype=float), (n,))
        if kind == BINARY:
            lo, hi = np.maximum(lo, 0.0), np.minimum(hi, 1.0)
        if np.any(lo > hi):
            raise ModelError("lower bound above upper bound")
        start = self.n_vars
        self._names.extend(names)
        self._binary.extend([kind == BINARY] * n)
        self._lb.extend(lo.tolist())
        self._ub.extend(hi.tolist())
        return np.arange(start, start + n)

    def var(self, vid: int) -> VarRef:
        return VarRef(int(vid), BINARY if self._binary[vid] else CONTINUOUS, self._names[vid])

    def var_by_name(self, name: str) -> VarRef:
        return self.var(self._names.index(name))

    def bounds(self, v: VarRef | int) -> tuple[float, float]:
        vid = v.id if isinstance(v, VarRef) else int(v)
        return self._lb[vid], self._ub[vid]

    def set_bounds(self, v: VarRef | int, lower: float | None = None, upper: float | None = None) -> None:
        vid = v.id if isinstance(v, VarRef) else int(v)
        if lower is not None:
            self._lb[vid] = float(lower)
        if upper is not None:
            self._ub[vid] = float(upper)
        if self._lb[vid] > self._ub[vid] + 1e-12:
            raise ModelError(f"variable {self._names[vid]}: empty bounds")

    def fix(self, v: VarRef | int, value: float) -> None:
        self.set_bounds(v, value, value)

    @property
    def names(self) -> list[str]:
        return self._names

    @property
    def is_binary(self) -> np.ndarray:
        return np.array(self._binary, dtype=bool)

    # constraints ---------------------------------------------------------
    def add_constraint(self, expr: Operand, sense: str, rhs: Operand = 0.0, tag: str = "") -> int:
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        e = LinExpr.of(expr) - LinExpr.of(rhs)
        terms = {k: v for k, v in e.terms.items() if v != 0.0}
        for k in terms:
            if not 0 <= k < self.n_vars:
                raise ModelError(f"constraint {tag!r} refers to an unregistered variable")
        cols = np.fromiter(terms.keys(), dtype=np.int64, count=len(terms)).reshape(1, -1)
        vals = np.fromiter(terms.values(), dtype=float, count=len(terms)).reshape(1, -1)
        if not np.all(np.isfinite(vals)) or not math.isfinite(e.constant):
            raise ModelError(f"constraint {tag!r} has non-finite data")
        self._chunks.append((cols, vals))
        self._senses.append(sense)
        self._rhs.append(-e.constant)
        self.tags.append(tag)
        return self.n_constraints - 1

    def add_rows(self, cols, vals, sense: str, rhs, tags: list[str]) -> None:
        """Append ``len(rhs)`` rows of equal width: ``sum_k vals[i,k] x[cols[i,k]] sense rhs[i]``."""
        cols = np.atleast_2d(np.asarray(cols, dtype=np.int64))
        vals = np.atleast_2d(np.asarray(vals, dtype=float))
        rhs = np.asarray(rhs, dtype=float).reshape(-1)
        if cols.shape != vals.shape or cols.shape[0] != rhs.shape[0] or len(tags) != rhs.shape[0]:
            raise ModelError("add_rows: inconsistent shapes")
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_vars):
            raise ModelError("add_rows: unregistered variable")
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(rhs))):
            raise ModelError("add_rows: non-finite data")
        self._chunks.append((cols, vals))
        self._senses.extend([sense] * len(rhs))
        self._rhs.extend(rhs.tolist())
        self.tags.extend(tags)

    def constraint(self, i: int) -> Constraint:
        row = self.matrix().getrow(i)
        expr = LinExpr(dict(zip(row.indices.tolist(), row.data.tolist())))
        return Constraint(expr, self._senses[i], self._rhs[i], self.tags[i])

    def constraints(self) -> list[Constraint]:
        return [self.constraint(i) for i in range(self.n_constraints)]

    def matrix(self) -> sp.csr_matrix:
        if not self._chunks:
            return sp.csr_matrix((0, self.n_vars))
        rows, cols, vals = [], [], []
        r0 = 0
        for c, v in self._chunks:
            m, w = c.shape
            rows.append(np.repeat(np.arange(r0, r0 + m), w))
            cols.append(c.ravel())
            vals.append(v.ravel())
            r0 += m
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(r0, self.n_vars),
        )
        A.sum_duplicates()
        A.eliminate_zeros()
        return A

    # objective -----------------------------------------------------------
    def minimize(self, expr: Operand) -> None:
        e = LinExpr.of(expr)
        for k in e.terms:
            if not 0 <= k < self.n_vars:
                raise ModelError("objective refers to an unregistered variable")
        self.objective = e

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for k, v in self.objective.terms.items():
            c[k] += v
        return c

    def arrays(self) -> ArrayForm:
        senses = np.array(self._senses, dtype=object)
        rhs = np.array(self._rhs, dtype=float)
        row_lo = np.where(senses == "<=", -np.inf, rhs).astype(float)
        row_hi = np.where(senses == ">=", np.inf, rhs).astype(float)
        return ArrayForm(
            self.objective_vector(),
            self.objective.constant,
            self.matrix(),
            row_lo,
            row_hi,
            np.array(self._lb, dtype=float),
            np.array(self._ub, dtype=float),
            self.is_binary,
        )

    @property
    def senses(self) -> list[str]:
        return self._senses

    @property
    def rhs(self) -> list[float]:
        return self._rhs

    def max_violation(self, x, int_tol: float = 1e-6) -> float:
        """Largest bound, row or integrality violation of an assignment."""
        f = self.arrays()
        x = np.asarray(x, dtype=float)
        ax = f.A @ x if f.A.shape[0] else np.zeros(0)
        viol = [0.0]
        if ax.size:
            viol.append(float(np.max(np.maximum(f.row_lo - ax, 0.0))))
            viol.append(float(np.max(np.maximum(ax - f.row_hi, 0.0))))
        if x.size:
            viol.append(float(np.max(np.maximum(f.lb - x, 0.0))))
            viol.append(float(np.max(np.maximum(x - f.ub, 0.0))))
            if f.binary.any():
                xb = x[f.binary]
                frac = np.abs(xb - np.round(xb))
                if frac.max() > int_tol:
                    viol.append(float(frac.max()))
        return max(viol)
