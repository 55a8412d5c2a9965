"""Writer for the CPLEX-style LP text format."""
from __future__ import annotations

import math
import re

import numpy as np

from .model import MilpModel

_BAD = re.compile(r"[^A-Za-z0-9_.]")
_TERMS_PER_LINE = 6


def _num(x: float) -> str:
    # shortest text that round-trips to the same double
    return repr(float(x))


def _sanitize(names: list[str], prefix: str) -> list[str]:
    out, seen = [], set()
    for k, raw in enumerate(names):
        s = _BAD.sub("_", raw).strip("_") or f"{prefix}{k}"
        if s[0].isdigit() or s[0] in ".eE":
            s = prefix + s
        if s in seen:
            s = f"{s}_{k}"
        seen.add(s)
        out.append(s)
    return out


def _terms(cols, vals, names) -> list[str]:
    lines, cur = [], []
    for j, (c, v) in enumerate(zip(cols, vals)):
        sign = "-" if v < 0 else "+"
        cur.append(f"{sign} {_num(abs(v))} {names[c]}")
        if len(cur) == _TERMS_PER_LINE:
            lines.append(" ".join(cur))
            cur = []
    if cur:
        lines.append(" ".join(cur))
    return lines or ([f"0 {names[0]}"] if names else ["0"])


def export_lp_text(model: MilpModel) -> str:
    """Render ``model`` as LP text; output is deterministic (variables by id, rows in insertion order)."""
    form = model.arrays()
    names = _sanitize(model.names, "x")
    rows = _sanitize([t or f"r{i}" for i, t in enumerate(model.tags)], "r")
    out = [f"\\ {model.name}", "Minimize"]
    nz = np.nonzero(form.c)[0]
    obj = _terms(nz.tolist(), form.c[nz].tolist(), names)
    if form.c0:
        # constant objective term, accepted by common LP readers
        obj[-1] += f" {'-' if form.c0 < 0 else '+'} {_num(abs(form.c0))}"
    out.append(" obj: " + obj[0])
    out += ["   " + ln for ln in obj[1:]]
    out.append("Subject To")
    A = form.A
    for i in range(A.shape[0]):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        cols, vals = A.indices[lo:hi], A.data[lo:hi]
        order = np.argsort(cols, kind="stable")
        body = _terms(cols[order].tolist(), vals[order].tolist(), names)
        sense = model.senses[i]
        op = {"<=": "<=", ">=": ">=", "==": "="}[sense]
        body[-1] += f" {op} {_num(model.rhs[i])}"
        out.append(f" {rows[i]}: " + body[0])
        out += ["   " + ln for ln in body[1:]]
    out.append("Bounds")
    for j, name in enumerate(names):
        lb, ub = form.lb[j], form.ub[j]
        if form.binary[j] and lb == 0.0 and ub == 1.0:
            continue
        if math.isinf(lb) and math.isinf(ub):
            out.append(f" {name} free")
        elif math.isinf(ub):
            out.append(f" {name} >= {_num(lb)}")
        elif math.isinf(lb):
            out.append(f" -inf <= {name} <= {_num(ub)}")
        elif lb == ub:
            out.append(f" {name} = {_num(lb)}")
        else:
            out.append(f" {_num(lb)} <= {name} <= {_num(ub)}")
    bins = [names[j] for j in np.nonzero(form.binary)[0]]
    if bins:
        out.append("Binaries")
        out += [" " + " ".join(bins[i : i + 8]) for i in range(0, len(bins), 8)]
    out.append("End")
    return "\n".join(out) + "\n"
