"""Random small MILPs and an enumeration oracle shared by several test files."""
import itertools

import numpy as np
from scipy.optimize import linprog

from rhcover.milp import BINARY, LinExpr, MilpModel


def random_model(rng, n_bin, n_cont, n_rows, feasible_bias=0.85):
    m = MilpModel("random")
    xb = [m.add_var(f"b{i}", BINARY) for i in range(n_bin)]
    xc = []
    for i in range(n_cont):
        lo = float(rng.integers(-5, 1))
        hi = lo + float(rng.integers(1, 8))
        xc.append(m.add_var(f"c{i}", lower=lo, upper=hi))
    allv = xb + xc
    # a reference point keeps most instances feasible
    ref = np.concatenate(
        [rng.integers(0, 2, n_bin).astype(float), [rng.uniform(*m.bounds(v)) for v in xc]]
    )
    for r in range(n_rows):
        k = int(rng.integers(1, min(4, len(allv)) + 1))
        idx = rng.choice(len(allv), size=k, replace=False)
        coef = rng.integers(-5, 6, size=k).astype(float)
        coef[coef == 0] = 1.0
        expr = LinExpr.total(float(c) * allv[i] for c, i in zip(coef, idx))
        act = float(coef @ ref[idx])
        sense = ["<=", ">=", "=="][int(rng.choice(3, p=[0.45, 0.45, 0.1]))]
        if rng.random() < feasible_bias:
            slack = float(rng.uniform(0, 3))
            rhs = act + slack if sense == "<=" else act - slack if sense == ">=" else act
        else:
            rhs = float(rng.uniform(-10, 10))
        m.add_constraint(expr, sense, rhs, f"r{r}")
    c = rng.integers(-9, 10, size=len(allv)).astype(float)
    m.minimize(LinExpr.total(float(ci) * v for ci, v in zip(c, allv)) + float(rng.integers(-3, 4)))
    return m


def enumerate_optimum(model):
    """Best objective over all binary assignments, LP on the continuous rest (scipy/HiGHS)."""
    f = model.arrays()
    A = f.A.toarray()
    bins = np.nonzero(f.binary)[0]
    cont = np.nonzero(~f.binary)[0]
    best = np.inf
    for bits in itertools.product((0.0, 1.0), repeat=len(bins)):
        xb = np.array(bits)
        if np.any(xb < f.lb[bins]) or np.any(xb > f.ub[bins]):
            continue
        base = A[:, bins] @ xb if len(bins) else np.zeros(A.shape[0])
        lo, hi = f.row_lo - base, f.row_hi - base
        cb = float(f.c[bins] @ xb) + f.c0
        if len(cont) == 0:
            if np.all(lo <= 1e-9) and np.all(hi >= -1e-9):
                best = min(best, cb)
            continue
        Ac = A[:, cont]
        ub_rows = np.isfinite(hi)
        lb_rows = np.isfinite(lo)
        eq = ub_rows & lb_rows & (lo == hi)
        A_ub = np.vstack([Ac[ub_rows & ~eq], -Ac[lb_rows & ~eq]])
        b_ub = np.concatenate([hi[ub_rows & ~eq], -lo[lb_rows & ~eq]])
        res = linprog(
            f.c[cont],
            A_ub=A_ub if len(b_ub) else None,
            b_ub=b_ub if len(b_ub) else None,
            A_eq=Ac[eq] if eq.any() else None,
            b_eq=lo[eq] if eq.any() else None,
            bounds=list(zip(f.lb[cont], f.ub[cont])),
            method="highs",
        )
        if res.status == 0:
            best = min(best, cb + res.fun)
    return best


def enumerate_binary(model, tol=1e-9):
    """Exhaustive optimum of a model with binary variables only (vectorised)."""
    f = model.arrays()
    if not np.all(f.binary):
        raise ValueError("model has continuous variables")
    n = len(f.c)
    X = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(float)
    ok = np.all((X >= f.lb - tol) & (X <= f.ub + tol), axis=1)
    act = X @ f.A.toarray().T
    ok &= np.all((act >= f.row_lo - tol) & (act <= f.row_hi + tol), axis=1)
    if not ok.any():
        return np.inf
    return float((X[ok] @ f.c).min() + f.c0)
