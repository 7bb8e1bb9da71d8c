"""Small hand-built and randomized cases shared by the test modules."""
from __future__ import annotations

import numpy as np
import networkx as nx

from microgrid_dro.netdata import CaseData, DgSpec, EdgeSpec, NodeSpec, resolve_defaults


def _node(nid, p, q, w, T, critical=False):
    return NodeSpec(nid, (float(p),) * T, (float(q),) * T, float(w), critical)


def two_node(T=1, demand=50.0, cap=100.0, mu=0.2, k=1):
    nodes = [_node("g", 0, 0, 10, T), _node("l", demand, demand / 2, 10, T)]
    edges = [EdgeSpec("g", "l", 0.01, 0.01, False, True, (mu,) * T)]
    dgs = [DgSpec("g", (cap,) * T, (cap,) * T)]
    return resolve_defaults(CaseData(nodes, edges, dgs, T, 0.5, k=k, n_sw_max=1, s_base_kva=100.0, name="two"))


def four_node(T=2, k=1, mu=0.3, n_sw=1, cap=120.0):
    """Root 1 feeds a path 1-2-3-4; tie 1-4 closes the loop. Node 2 is critical."""
    nodes = [
        _node("1", 0, 0, 10, T),
        _node("2", 40, 20, 100, T, critical=True),
        _node("3", 60, 30, 10, T),
        _node("4", 50, 25, 10, T),
    ]
    edges = [
        EdgeSpec("1", "2", 0.01, 0.01, False, True, (mu,) * T),
        EdgeSpec("2", "3", 0.01, 0.01, False, True, (mu,) * T),
        EdgeSpec("3", "4", 0.01, 0.01, False, True, (mu,) * T),
        EdgeSpec("1", "4", 0.01, 0.01, True, False, (mu,) * T),
    ]
    dgs = [DgSpec("1", (cap,) * T, (cap,) * T)]
    return resolve_defaults(CaseData(nodes, edges, dgs, T, 0.5, k=k, n_sw_max=n_sw, s_base_kva=100.0, name="four"))


def line_case(n=4, T=1, cap=1000.0, demands=None, weights=None, mu=0.1, k=1):
    """Path 0-1-...-(n-1) with the DG at node 0."""
    demands = demands or [0.0] + [10.0] * (n - 1)
    weights = weights or [10.0] * n
    nodes = [_node(str(i), demands[i], demands[i] / 2, weights[i], T) for i in range(n)]
    edges = [EdgeSpec(str(i), str(i + 1), 0.01, 0.01, False, True, (mu,) * T) for i in range(n - 1)]
    dgs = [DgSpec("0", (cap,) * T, (cap,) * T)]
    return resolve_defaults(CaseData(nodes, edges, dgs, T, 0.5, k=k, n_sw_max=n, s_base_kva=100.0, name="line"))


def triangle(T=1):
    nodes = [_node("r", 0, 0, 10, T), _node("a", 10, 5, 10, T), _node("b", 10, 5, 10, T)]
    edges = [
        EdgeSpec("r", "a", 0.01, 0.01, False, True, (0.1,) * T),
        EdgeSpec("a", "b", 0.01, 0.01, False, True, (0.1,) * T),
        EdgeSpec("r", "b", 0.01, 0.01, True, False, (0.1,) * T),
    ]
    dgs = [DgSpec("r", (100.0,) * T, (100.0,) * T)]
    return resolve_defaults(CaseData(nodes, edges, dgs, T, 0.5, k=1, n_sw_max=3, s_base_kva=100.0, name="tri"))


def random_case(seed, max_edges=4, T=None, k=None, roots=None):
    """Connected random network with at most ``max_edges`` lines.

    A random spanning tree plus extra ties, one or two grid-forming DGs with
    random capacities, random demands, weights and failure bounds below 1.
    """
    rng = np.random.default_rng(seed)
    n_edges = int(rng.integers(2, max_edges + 1))
    n_nodes = int(rng.integers(max(2, n_edges - 1), n_edges + 2))
    n_nodes = min(n_nodes, n_edges + 1)
    T = T if T is not None else int(rng.integers(1, 3))
    k = k if k is not None else int(rng.integers(0, 2))
    tree = nx.random_labeled_tree(n_nodes, seed=int(rng.integers(1 << 30))) if n_nodes > 1 else nx.empty_graph(1)
    pairs = [tuple(sorted(e)) for e in tree.edges]
    candidates = [(a, b) for a in range(n_nodes) for b in range(a + 1, n_nodes) if (a, b) not in pairs]
    rng.shuffle(candidates)
    ties = candidates[: n_edges - len(pairs)]
    n_roots = roots if roots is not None else int(rng.integers(1, min(2, n_nodes - 1) + 1))
    root_ids = sorted(rng.choice(n_nodes, size=n_roots, replace=False).tolist())
    nodes = []
    critical = int(rng.integers(n_nodes))
    for i in range(n_nodes):
        d = 0.0 if i in root_ids else float(rng.integers(5, 60))
        w = 100.0 if i == critical else 10.0
        nodes.append(NodeSpec(str(i), tuple(round(d * (1 + 0.1 * t), 3) for t in range(T)),
                              tuple(round(0.4 * d * (1 + 0.1 * t), 3) for t in range(T)), w, i == critical))
    def mu():
        base = float(rng.uniform(0.05, 0.6))
        return tuple(round(min(0.95, base + 0.1 * t), 4) for t in range(T))
    edges = [EdgeSpec(str(a), str(b), 0.01, 0.02, False, True, mu()) for a, b in pairs]
    edges += [EdgeSpec(str(a), str(b), 0.01, 0.02, True, False, mu()) for a, b in ties]
    total = sum(n.demand_p[-1] for n in nodes)
    dgs = [DgSpec(str(r), (round(float(rng.uniform(0.3, 1.2)) * total, 3),) * T,
                  (round(0.8 * total, 3),) * T) for r in root_ids]
    case = CaseData(nodes, edges, dgs, T, 0.5, k=k, n_sw_max=len(edges), s_base_kva=100.0, name=f"rand{seed}")
    return resolve_defaults(case)
