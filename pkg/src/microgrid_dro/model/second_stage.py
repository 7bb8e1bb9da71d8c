"""Post-event operation rows (LinDistFlow) in affine form ``F y + E x + H u (sense) b``.

Internal units: power in p.u. of ``s_base_kva``; objective weights divided by
the largest weight. ``AffineSystem.obj_scale`` converts the objective back to
weighted shedding in $/h (weight in $/kWh times kW).
"""
from __future__ import annotations

import numpy as np

from ..netdata import CaseData
from .index import VariableIndex
from .systems import AffineSystem, RowBuilder, finish_affine


def voltage_big_m(case: CaseData) -> float:
    return 2.0 * (case.v_max - case.v_min)


def flow_bounds(case: CaseData) -> tuple[np.ndarray, np.ndarray]:
    """Per-step bounds on |PF| and |QF| in p.u.

    On a lossless radial network no line carries more than the total
    generation capacity or the total demand, whichever is smaller.
    """
    sb = case.s_base_kva
    p_gen = np.sum([dg.p_max for dg in case.dgs], axis=0) / sb
    q_gen = np.sum([dg.q_max for dg in case.dgs], axis=0) / sb
    p_dem = np.sum([n.demand_p for n in case.nodes], axis=0) / sb
    q_dem = np.sum([n.demand_q for n in case.nodes], axis=0) / sb
    mp = np.minimum(case.big_m, np.minimum(p_gen, p_dem))
    mq = np.minimum(case.big_m, np.minimum(q_gen, q_dem))
    return mp, mq


def add_second_stage_rows(rb: RowBuilder, case: CaseData, idx: VariableIndex) -> None:
    T = case.T
    sb = case.s_base_kva
    pos = case.node_pos
    roots = {pos[r] for r in case.roots}
    ends = [(pos[e.from_node], pos[e.to_node]) for e in case.edges]
    cols = idx.cols
    c, sv = cols["c"], cols["sv_tp"]
    PG, QG, Sp, Sq = cols["PG"], cols["QG"], cols["S_p"], cols["S_q"]
    PF, QF, V, dl, u = cols["PF"], cols["QF"], cols["V"], cols["delta"], cols["u"]
    z, w = cols["z"], cols["w"]
    m_p, m_q = flow_bounds(case)
    m_volt = voltage_big_m(case)
    vmin, vmax = case.v_min, case.v_max

    dgs_at: dict[int, list[int]] = {i: [] for i in range(len(case.nodes))}
    for g, dg in enumerate(case.dgs):
        dgs_at[pos[dg.node]].append(g)

    for t in range(T):
        for g, dg in enumerate(case.dgs):
            n = pos[dg.node]
            pmax, qmax = dg.p_max[t] / sb, dg.q_max[t] / sb
            rb.add("dg_capacity", [(PG[g, t], 1.0), (sv[n, t], pmax)], "L", pmax, t)
            rb.add("dg_capacity", [(QG[g, t], 1.0), (sv[n, t], qmax)], "L", qmax, t)
            rb.add("aux", [(PG[g, t], -1.0)], "L", 0.0, t)
            rb.add("aux", [(QG[g, t], -1.0)], "L", 0.0, t)

        for i, node in enumerate(case.nodes):
            p_terms = [(Sp[i, t], 1.0)] + [(PG[g, t], -1.0) for g in dgs_at[i]]
            q_terms = [(Sq[i, t], 1.0)] + [(QG[g, t], -1.0) for g in dgs_at[i]]
            for e, (a, b) in enumerate(ends):
                if a == i:
                    p_terms.append((PF[e, t], 1.0))
                    q_terms.append((QF[e, t], 1.0))
                elif b == i:
                    p_terms.append((PF[e, t], -1.0))
                    q_terms.append((QF[e, t], -1.0))
            rb.add("power_balance", p_terms, "E", 0.0, t)
            rb.add("power_balance", q_terms, "E", 0.0, t)

            dp, dq = node.demand_p[t] / sb, node.demand_q[t] / sb
            rb.add("aux", [(Sp[i, t], 1.0)], "L", dp, t)
            rb.add("aux", [(Sp[i, t], -1.0)], "L", 0.0, t)
            rb.add("aux", [(Sq[i, t], 1.0)], "L", dq, t)
            rb.add("aux", [(Sq[i, t], -1.0)], "L", 0.0, t)
            if dp > 0:
                rb.add("energy", [(Sp[i, t], 1.0), (z[i, t], -dp)], "L", 0.0, t)
            if dp > 0:
                # reactive load follows active load at the node's power factor
                rb.add("aux", [(Sq[i, t], dp), (Sp[i, t], -dq)], "E", 0.0, t)

        for e, (a, b) in enumerate(ends):
            edge = case.edges[e]
            rb.add("voltage_drop", [(V[a, t], 1.0), (V[b, t], -1.0), (PF[e, t], -edge.r), (QF[e, t], -edge.x),
                            (dl[e, t], -1.0)], "E", 0.0, t)
            gate = [(c[2 * e, t], m_volt), (c[2 * e + 1, t], m_volt), (sv[a, t], -vmax), (sv[b, t], -vmax)]
            rb.add("voltage_gate", [(dl[e, t], 1.0)] + gate, "L", m_volt, t)
            rb.add("voltage_gate", [(dl[e, t], -1.0)] + gate, "L", m_volt, t)
            for var, m in ((PF, m_p[t]), (QF, m_q[t])):
                closed = [(c[2 * e, t], -m), (c[2 * e + 1, t], -m)]
                rb.add("flow_closed", [(var[e, t], 1.0)] + closed, "L", 0.0, t)
                rb.add("flow_closed", [(var[e, t], -1.0)] + closed, "L", 0.0, t)
            for var, m in ((PF, m_p[t]), (QF, m_q[t])):
                rb.add("flow_intact", [(var[e, t], 1.0), (u[e, t], -m)], "L", 0.0, t)
                rb.add("flow_intact", [(var[e, t], -1.0), (u[e, t], -m)], "L", 0.0, t)

        # energization: arc a = (i -> j) passes energy (w) only if it is a parent arc, i is
        # energized and the line survives; redundant for integral topologies, it keeps
        # fractional ones from hedging failures
        into: dict[int, list[int]] = {i: [] for i in range(len(case.nodes))}
        for e, (a, b) in enumerate(ends):
            for arc, (i, j) in ((2 * e, (a, b)), (2 * e + 1, (b, a))):
                into[j].append(arc)
                rb.add("energy", [(w[arc, t], -1.0)], "L", 0.0, t)
                rb.add("energy", [(w[arc, t], 1.0), (c[arc, t], -1.0)], "L", 0.0, t)
                rb.add("energy", [(w[arc, t], 1.0), (z[i, t], -1.0)], "L", 0.0, t)
                rb.add("energy", [(w[arc, t], 1.0), (u[e, t], -1.0)], "L", 0.0, t)
            # no energy through a line means no flow on it
            for var, m in ((PF, m_p[t]), (QF, m_q[t])):
                live = [(w[2 * e, t], -m), (w[2 * e + 1, t], -m)]
                rb.add("energy", [(var[e, t], 1.0)] + live, "L", 0.0, t)
                rb.add("energy", [(var[e, t], -1.0)] + live, "L", 0.0, t)
        for i in range(len(case.nodes)):
            rb.add("energy", [(z[i, t], -1.0)], "L", 0.0, t)
            if i in roots:
                rb.add("energy", [(z[i, t], 1.0)], "L", 1.0, t)
            else:
                rb.add("energy", [(z[i, t], 1.0), (sv[i, t], 1.0)], "L", 1.0, t)
                rb.add("energy", [(z[i, t], 1.0)] + [(w[a, t], -1.0) for a in into[i]], "L", 0.0, t)

        for i in range(len(case.nodes)):
            if i in roots:
                rb.add("slack_voltage", [(V[i, t], 1.0)], "E", 1.0, t)
            rb.add("voltage_limits", [(V[i, t], 1.0), (sv[i, t], vmax)], "L", vmax, t)
            rb.add("voltage_limits", [(V[i, t], -1.0), (sv[i, t], -vmin)], "L", -vmin, t)


def objective_scale(case: CaseData) -> float:
    return max(n.weight for n in case.nodes) * case.s_base_kva


def second_stage_objective(case: CaseData, idx: VariableIndex):
    """Coefficients on the y block and constant so that d@y + d0 = sum w*(demand - served) / scale."""
    wmax = max(n.weight for n in case.nodes)
    sb = case.s_base_kva
    d = np.zeros(idx.ny)
    d0 = 0.0
    sp_local = idx.local("S_p")
    for i, node in enumerate(case.nodes):
        w = node.weight / wmax
        for t in range(case.T):
            d[sp_local[i, t]] = -w
            d0 += w * node.demand_p[t] / sb
    return d, d0


def build_second_stage(case: CaseData, idx: VariableIndex) -> AffineSystem:
    rb = RowBuilder()
    add_second_stage_rows(rb, case, idx)
    d, d0 = second_stage_objective(case, idx)
    return finish_affine(rb, idx, d, d0, objective_scale(case))
