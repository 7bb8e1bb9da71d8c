"""Graph-theoretic radiality check, independent of the MILP rows."""
from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from ..netdata import CaseData
from .decisions import FirstStageDecision


@dataclass
class RadialityReport:
    t: int
    violations: list[str] = field(default_factory=list)
    components: list[set] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_radiality(x: FirstStageDecision, case: CaseData, t: int, tol: float = 1e-6) -> RadialityReport:
    """Check the closed-line subgraph at step ``t`` (0-based).

    Every component that carries a closed line or an energized node must be a
    tree holding exactly one grid-forming bus, arcs must point away from that
    bus, and de-energized nodes (``sv_tp = 1``) must be isolated.
    """
    rep = RadialityReport(t=t)
    ids = case.node_ids
    roots = set(case.roots)
    pos = case.node_pos
    c = np.asarray(x.c)[:, t]
    sv = np.asarray(x.sv_tp)[:, t]

    for i, nid in enumerate(ids):
        if sv[i] < -tol or sv[i] > 1 + tol:
            rep.violations.append(f"sv_tp out of range at {nid}")
        elif min(abs(sv[i]), abs(1 - sv[i])) > tol:
            rep.violations.append(f"fractional sv_tp at {nid}")

    g = nx.Graph()
    g.add_nodes_from(ids)
    parent_of: dict[str, list[str]] = {nid: [] for nid in ids}
    for e, edge in enumerate(case.edges):
        fwd, rev = c[2 * e] > 0.5, c[2 * e + 1] > 0.5
        if fwd and rev:
            rep.violations.append(f"line {edge.label} oriented both ways")
        if fwd or rev:
            g.add_edge(edge.from_node, edge.to_node)
            if fwd:
                parent_of[edge.to_node].append(edge.from_node)
            if rev:
                parent_of[edge.from_node].append(edge.to_node)

    for comp in nx.connected_components(g):
        rep.components.append(set(comp))
        sub = g.subgraph(comp)
        energized = [n for n in comp if sv[pos[n]] < 0.5]
        if sub.number_of_edges() == 0 and not energized:
            continue
        if sub.number_of_edges() != sub.number_of_nodes() - 1:
            rep.violations.append(f"cycle in component {sorted(comp)}")
            continue
        comp_roots = [n for n in comp if n in roots]
        if len(comp_roots) > 1:
            rep.violations.append(f"multiple roots {sorted(comp_roots)} in one component")
            continue
        if not comp_roots:
            rep.violations.append(f"no grid-forming bus in component {sorted(comp)}")
            continue
        root = comp_roots[0]
        depth = nx.single_source_shortest_path_length(sub, root)
        for n in comp:
            if n == root:
                if parent_of[n]:
                    rep.violations.append(f"grid-forming bus {n} has a parent")
                continue
            ps = parent_of[n]
            if len(ps) != 1 or depth[ps[0]] != depth[n] - 1:
                rep.violations.append(f"arc orientation at {n} does not point away from {root}")
            if sv[pos[n]] > 0.5:
                rep.violations.append(f"de-energized node {n} sits on closed lines")

    for nid in ids:
        if sv[pos[nid]] < 0.5 and nid not in roots and g.degree(nid) == 0:
            rep.violations.append(f"energized node {nid} is not connected to any grid-forming bus")
    return rep


def check_all_steps(x: FirstStageDecision, case: CaseData) -> list[RadialityReport]:
    return [check_radiality(x, case, t) for t in range(case.T)]
