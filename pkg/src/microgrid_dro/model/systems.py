"""Row containers: a plain linear system over first-stage columns and the
affine second-stage system ``F y (sense) b - E x - H u``."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

from ..solvers import ProblemSpec, write_lp
from .index import VariableIndex


class RowBuilder:
    """Accumulates rows as (column, coefficient) terms over the global column space."""

    def __init__(self):
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.rhs: list[float] = []
        self.senses: list[str] = []
        self.tags: list[str] = []
        self.steps: list[int] = []

    def add(self, tag: str, terms: Iterable[tuple[int, float]], sense: str, rhs: float, t: int = -1) -> int:
        i = len(self.rhs)
        for col, val in terms:
            if val != 0.0:
                self.rows.append(i)
                self.cols.append(int(col))
                self.vals.append(float(val))
        self.rhs.append(float(rhs))
        self.senses.append(sense)
        self.tags.append(tag)
        self.steps.append(t)
        return i

    def __len__(self) -> int:
        return len(self.rhs)

    def matrix(self, col_lo: int, col_hi: int) -> sp.csr_matrix:
        r = np.asarray(self.rows, dtype=np.int64)
        c = np.asarray(self.cols, dtype=np.int64)
        v = np.asarray(self.vals, dtype=float)
        keep = (c >= col_lo) & (c < col_hi)
        return sp.csr_matrix((v[keep], (r[keep], c[keep] - col_lo)), shape=(len(self.rhs), col_hi - col_lo))


def _groups(tags: list[str]) -> dict[str, np.ndarray]:
    out: dict[str, list[int]] = defaultdict(list)
    for i, t in enumerate(tags):
        out[t].append(i)
    return {k: np.asarray(v) for k, v in out.items()}


@dataclass(frozen=True)
class LinearSystem:
    """``A x (sense) rhs`` with column bounds and integrality; every row tagged by the constraint family it belongs to."""

    A: sp.csr_matrix
    rhs: np.ndarray
    senses: np.ndarray
    tags: tuple[str, ...]
    lb: np.ndarray
    ub: np.ndarray
    integrality: np.ndarray
    col_names: tuple[str, ...] = ()

    @property
    def groups(self) -> dict[str, np.ndarray]:
        return _groups(list(self.tags))

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def residuals(self, x: np.ndarray) -> np.ndarray:
        diff = self.A @ x - self.rhs
        return np.where(self.senses == "L", diff, np.where(self.senses == "G", -diff, np.abs(diff)))

    def violated(self, x: np.ndarray, tol: float = 1e-6) -> list[str]:
        """Tags of violated rows, bound violations reported as ``bounds``."""
        res = self.residuals(x)
        out = sorted({self.tags[i] for i in np.flatnonzero(res > tol)})
        if np.any(x < self.lb - tol) or np.any(x > self.ub + tol):
            out.append("bounds")
        return out

    def to_problem(self, c: Optional[np.ndarray] = None) -> ProblemSpec:
        n = self.A.shape[1]
        return ProblemSpec(
            c=np.zeros(n) if c is None else c,
            A=self.A,
            senses=self.senses,
            rhs=self.rhs,
            lb=self.lb,
            ub=self.ub,
            integrality=self.integrality,
            col_names=list(self.col_names) or None,
        )

    def dump_lp(self) -> str:
        return write_lp(self.to_problem(), row_tags=self.tags)


@dataclass(frozen=True)
class AffineSystem:
    """Second-stage rows ``F y + E x + H u (sense) b`` with all ``y`` free.

    The operation objective is ``d @ y + d0`` in internal units; multiply by
    ``obj_scale`` for weighted shedding in $/h.
    """

    F: sp.csr_matrix
    E: sp.csr_matrix
    H: sp.csr_matrix
    b: np.ndarray
    senses: np.ndarray
    tags: tuple[str, ...]
    steps: np.ndarray
    d: np.ndarray
    d0: float
    obj_scale: float
    y_names: tuple[str, ...] = ()

    @property
    def groups(self) -> dict[str, np.ndarray]:
        return _groups(list(self.tags))

    @property
    def n_rows(self) -> int:
        return self.b.size

    def rhs_for(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.b - self.E @ x - self.H @ u

    def to_problem(self, x: np.ndarray, u: np.ndarray) -> ProblemSpec:
        """The operation LP with first stage and uncertainty fixed."""
        ny = self.F.shape[1]
        return ProblemSpec(
            c=self.d,
            A=self.F,
            senses=self.senses,
            rhs=self.rhs_for(x, u),
            lb=np.full(ny, -np.inf),
            ub=np.full(ny, np.inf),
            integrality=np.zeros(ny, dtype=bool),
            offset=self.d0,
            col_names=list(self.y_names) or None,
        )

    def dump_lp(self, x: np.ndarray, u: np.ndarray) -> str:
        return write_lp(self.to_problem(x, u), row_tags=self.tags)


def finish_linear(builder: RowBuilder, idx: VariableIndex, lb, ub, integrality) -> LinearSystem:
    nx = idx.nx
    return LinearSystem(
        A=builder.matrix(0, nx),
        rhs=np.asarray(builder.rhs),
        senses=np.asarray(builder.senses),
        tags=tuple(builder.tags),
        lb=np.asarray(lb, dtype=float),
        ub=np.asarray(ub, dtype=float),
        integrality=np.asarray(integrality, dtype=bool),
        col_names=tuple(idx.names("x")),
    )


def finish_affine(builder: RowBuilder, idx: VariableIndex, d, d0, obj_scale) -> AffineSystem:
    xs, ys, us = idx.block_start["x"], idx.block_start["y"], idx.block_start["u"]
    return AffineSystem(
        F=builder.matrix(ys, ys + idx.ny),
        E=builder.matrix(xs, xs + idx.nx),
        H=builder.matrix(us, us + idx.nu),
        b=np.asarray(builder.rhs),
        senses=np.asarray(builder.senses),
        tags=tuple(builder.tags),
        steps=np.asarray(builder.steps),
        d=np.asarray(d, dtype=float),
        d0=float(d0),
        obj_scale=float(obj_scale),
        y_names=tuple(idx.names("y")),
    )
