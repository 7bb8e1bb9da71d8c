"""Dense column numbering for every decision symbol of the formation model.

Columns are laid out in three contiguous blocks: first-stage ``x``
(topology), second-stage ``y`` (operation), uncertainty ``u``. Inside a block
kinds follow declaration order and subscripts are row-major over
(element, step).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..netdata import CaseData

X_KINDS = ("c", "f", "sv_tp", "v_cl", "v_op")
Y_KINDS = ("PG", "QG", "S_p", "S_q", "PF", "QF", "V", "delta", "z", "w")
U_KINDS = ("u",)
BLOCKS = {"x": X_KINDS, "y": Y_KINDS, "u": U_KINDS}

# element family each kind is subscripted by
_FAMILY = {
    "c": "arc", "f": "arc", "sv_tp": "node", "v_cl": "edge", "v_op": "edge",
    "PG": "dg", "QG": "dg", "S_p": "node", "S_q": "node", "PF": "edge", "QF": "edge",
    "V": "node", "delta": "edge", "z": "node", "w": "arc", "u": "edge",
}


@dataclass
class VariableIndex:
    case_name: str
    T: int
    node_ids: list[str]
    edge_pairs: list[tuple[str, str]]
    dg_nodes: list[str]
    cols: dict[str, np.ndarray] = field(default_factory=dict)
    block_start: dict[str, int] = field(default_factory=dict)
    block_size: dict[str, int] = field(default_factory=dict)

    @property
    def arcs(self) -> list[tuple[str, str]]:
        """Arc ``2e`` is from->to of edge e, arc ``2e+1`` the reverse."""
        out = []
        for a, b in self.edge_pairs:
            out += [(a, b), (b, a)]
        return out

    @property
    def n_total(self) -> int:
        return sum(self.block_size.values())

    @property
    def nx(self) -> int:
        return self.block_size["x"]

    @property
    def ny(self) -> int:
        return self.block_size["y"]

    @property
    def nu(self) -> int:
        return self.block_size["u"]

    def local(self, kind: str) -> np.ndarray:
        """Column ids of ``kind`` relative to the start of its block."""
        return self.cols[kind] - self.block_start[block_of(kind)]

    def column(self, kind: str, element: int, t: int) -> int:
        return int(self.cols[kind][element, t])

    def describe(self, col: int) -> str:
        for kind, arr in self.cols.items():
            hit = np.argwhere(arr == col)
            if hit.size:
                e, t = hit[0]
                return f"{kind}[{self._element_label(kind, int(e))},t{int(t) + 1}]"
        raise KeyError(col)

    def names(self, block: str) -> list[str]:
        out = [""] * self.block_size[block]
        start = self.block_start[block]
        for kind in BLOCKS[block]:
            arr = self.cols[kind]
            for e in range(arr.shape[0]):
                lab = self._element_label(kind, e)
                for t in range(arr.shape[1]):
                    out[arr[e, t] - start] = f"{kind}[{lab},t{t + 1}]"
        return out

    def _element_label(self, kind: str, e: int) -> str:
        fam = _FAMILY[kind]
        if fam == "arc":
            a, b = self.arcs[e]
            return f"{a}->{b}"
        if fam == "edge":
            a, b = self.edge_pairs[e]
            return f"{a}-{b}"
        if fam == "dg":
            return f"dg{e}@{self.dg_nodes[e]}"
        return self.node_ids[e]


def block_of(kind: str) -> str:
    for block, kinds in BLOCKS.items():
        if kind in kinds:
            return block
    raise KeyError(kind)


def expected_counts(n_nodes: int, n_edges: int, n_dgs: int, T: int) -> dict[str, int]:
    sizes = {"arc": 2 * n_edges, "node": n_nodes, "edge": n_edges, "dg": n_dgs}
    return {kind: sizes[_FAMILY[kind]] * T for kind in _FAMILY}


def index_variables(case: CaseData) -> VariableIndex:
    T = case.T
    idx = VariableIndex(
        case_name=case.name,
        T=T,
        node_ids=case.node_ids,
        edge_pairs=[(e.from_node, e.to_node) for e in case.edges],
        dg_nodes=[d.node for d in case.dgs],
    )
    sizes = {"arc": 2 * len(case.edges), "node": len(case.nodes), "edge": len(case.edges), "dg": len(case.dgs)}
    nxt = 0
    for block, kinds in BLOCKS.items():
        idx.block_start[block] = nxt
        for kind in kinds:
            n = sizes[_FAMILY[kind]]
            idx.cols[kind] = np.arange(nxt, nxt + n * T, dtype=np.int64).reshape(n, T)
            nxt += n * T
        idx.block_size[block] = nxt - idx.block_start[block]
    return idx
