"""Topology polytope: single-commodity fictitious flow plus spanning-tree parent rows.

Grid-forming buses are roots with no parent arc and non-negative net
fictitious outflow. Every other node receives exactly one unit of net
inflow unless its connection slack ``sv_tp`` disconnects it.
"""
from __future__ import annotations

import numpy as np

from ..netdata import CaseData
from .index import VariableIndex
from .systems import LinearSystem, RowBuilder, finish_linear


def first_stage_bounds(case: CaseData, idx: VariableIndex):
    nx = idx.nx
    lb = np.zeros(nx)
    ub = np.ones(nx)
    integ = np.zeros(nx, dtype=bool)
    m_flow = float(len(case.nodes))
    ub[idx.local("f").ravel()] = m_flow
    # switch actions stay continuous: for integral c the budget row is tightest at v_cl + v_op = |change|
    integ[idx.local("c").ravel()] = True
    for e, edge in enumerate(case.edges):
        if not edge.switchable:
            ub[idx.local("v_cl")[e]] = 0.0
            ub[idx.local("v_op")[e]] = 0.0
    pos = case.node_pos
    for r in case.roots:
        # grid-forming buses are always energized
        ub[idx.local("sv_tp")[pos[r]]] = 0.0
    return lb, ub, integ


def add_first_stage_rows(rb: RowBuilder, case: CaseData, idx: VariableIndex, static: bool = False) -> None:
    """Append topology rows to ``rb`` using global column ids of ``idx``."""
    T = case.T
    pos = case.node_pos
    roots = {pos[r] for r in case.roots}
    ends = [(pos[e.from_node], pos[e.to_node]) for e in case.edges]
    c, f, sv = idx.cols["c"], idx.cols["f"], idx.cols["sv_tp"]
    v_cl, v_op = idx.cols["v_cl"], idx.cols["v_op"]
    m_flow = float(len(case.nodes))

    out_arcs: dict[int, list[int]] = {i: [] for i in range(len(case.nodes))}
    in_arcs: dict[int, list[int]] = {i: [] for i in range(len(case.nodes))}
    for e, (a, b) in enumerate(ends):
        out_arcs[a].append(2 * e)
        in_arcs[b].append(2 * e)
        out_arcs[b].append(2 * e + 1)
        in_arcs[a].append(2 * e + 1)

    for t in range(T):
        for i in range(len(case.nodes)):
            inflow = [(f[a, t], 1.0) for a in in_arcs[i]]
            outflow = [(f[a, t], -1.0) for a in out_arcs[i]]
            if i in roots:
                # roots only inject: inflow - outflow <= 0
                rb.add("root_injection", inflow + outflow, "L", 0.0, t)
            else:
                rb.add("flow_balance", inflow + outflow + [(sv[i, t], 1.0)], "E", 1.0, t)
        for a in range(2 * len(ends)):
            rb.add("flow_gate", [(f[a, t], 1.0), (c[a, t], -m_flow)], "L", 0.0, t)
        for i in roots:
            for a in in_arcs[i]:
                rb.add("root_no_parent", [(c[a, t], 1.0)], "E", 0.0, t)
        for e in range(len(ends)):
            rb.add("one_direction", [(c[2 * e, t], 1.0), (c[2 * e + 1, t], 1.0)], "L", 1.0, t)
        for i in range(len(case.nodes)):
            if i not in roots:
                rb.add("one_parent", [(c[a, t], 1.0) for a in in_arcs[i]] + [(sv[i, t], 1.0)], "E", 1.0, t)
        for e, edge in enumerate(case.edges):
            terms = [(c[2 * e, t], 1.0), (c[2 * e + 1, t], 1.0), (v_cl[e, t], -1.0), (v_op[e, t], 1.0)]
            if t == 0:
                rb.add("switch_action", terms, "E", 1.0 if edge.initially_closed else 0.0, t)
            else:
                terms += [(c[2 * e, t - 1], -1.0), (c[2 * e + 1, t - 1], -1.0)]
                rb.add("switch_action", terms, "E", 0.0, t)
        if t >= 1:
            terms = [(v_cl[e, t], 1.0) for e in range(len(ends))] + [(v_op[e, t], 1.0) for e in range(len(ends))]
            rb.add("switch_budget", terms, "L", float(case.n_sw_max), t)
        if static and t >= 1:
            for a in range(2 * len(ends)):
                rb.add("static", [(c[a, t], 1.0), (c[a, 0], -1.0)], "E", 0.0, t)


def build_first_stage(case: CaseData, idx: VariableIndex, static: bool = False) -> LinearSystem:
    """Radiality and switching rows over the first-stage block (``Dx <= h``).

    ``static=True`` pins every arc to its first-step value (fixed boundaries).
    Slack bounds ``0 <= sv_tp <= 1`` are column bounds.
    """
    rb = RowBuilder()
    add_first_stage_rows(rb, case, idx, static=static)
    lb, ub, integ = first_stage_bounds(case, idx)
    return finish_linear(rb, idx, lb, ub, integ)
