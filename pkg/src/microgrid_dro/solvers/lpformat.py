"""Write a ProblemSpec in CPLEX LP text format for cross-checking with external solvers."""
from __future__ import annotations

import io
import re
from typing import Optional, Sequence, TextIO

import numpy as np

from .base import ProblemSpec

_SENSE = {"L": "<=", "E": "=", "G": ">="}
_BAD = re.compile(r"[^A-Za-z0-9_.\[\]]")


def _name(raw: str) -> str:
    s = _BAD.sub("_", raw)
    return s if s and not s[0].isdigit() and s[0] not in ".e" else "v_" + s


def _terms(coefs, names) -> str:
    parts = []
    for a, nm in zip(coefs, names):
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {abs(a):.17g} {nm}")
    if not parts:
        return "0 " + names[0] if names else "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def write_lp(problem: ProblemSpec, out: Optional[TextIO] = None, row_tags: Optional[Sequence[str]] = None) -> str:
    """Serialize ``problem``; each run of equal ``row_tags`` gets one comment line ahead of it."""
    buf = out or io.StringIO()
    p = problem
    cols = [_name(n) for n in p.col_names] if p.col_names else [f"x{j}" for j in range(p.n_cols)]
    rows = [_name(n) for n in p.row_names] if p.row_names else [f"r{i}" for i in range(p.n_rows)]
    buf.write("\\ generated by microgrid_dro\n")
    if p.offset:
        buf.write(f"\\ objective offset {p.offset:.17g}\n")
    buf.write("Minimize\n obj: ")
    nz = np.flatnonzero(p.c)
    buf.write(_terms(p.c[nz], [cols[j] for j in nz]) if nz.size else f"0 {cols[0]}")
    buf.write("\nSubject To\n")
    A = p.A.tocsr()
    last_tag = None
    for i in range(p.n_rows):
        tag = row_tags[i] if row_tags is not None else None
        if tag is not None and tag != last_tag:
            buf.write(f"\\ {tag}\n")
            last_tag = tag
        lo, hi = A.indptr[i], A.indptr[i + 1]
        idx, val = A.indices[lo:hi], A.data[lo:hi]
        lhs = _terms(val, [cols[j] for j in idx]) if idx.size else f"0 {cols[0]}"
        buf.write(f" {rows[i]}: {lhs} {_SENSE[p.senses[i]]} {p.rhs[i]:.17g}\n")
    buf.write("Bounds\n")
    for j in range(p.n_cols):
        lo, hi = p.lb[j], p.ub[j]
        if np.isinf(lo) and np.isinf(hi):
            buf.write(f" {cols[j]} free\n")
        else:
            lo_s = "-inf" if np.isinf(lo) else f"{lo:.17g}"
            hi_s = "+inf" if np.isinf(hi) else f"{hi:.17g}"
            buf.write(f" {lo_s} <= {cols[j]} <= {hi_s}\n")
    ints = np.flatnonzero(p.integrality)
    if ints.size:
        buf.write("Generals\n")
        for j in ints:
            buf.write(f" {cols[j]}\n")
    buf.write("End\n")
    return buf.getvalue() if out is None else ""
