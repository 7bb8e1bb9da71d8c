"""Value types for first-stage decisions and line-survival trajectories."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..netdata import CaseData
from .index import VariableIndex


class NotRadialError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FirstStageDecision:
    """Microgrid boundaries over the horizon.

    ``c[2e, t] = 1`` makes the ``from_node`` of edge ``e`` the parent of its
    ``to_node``; ``c[2e+1, t]`` is the reverse orientation.
    """

    c: np.ndarray
    sv_tp: np.ndarray
    v_cl: np.ndarray
    v_op: np.ndarray
    f: np.ndarray

    @property
    def line_status(self) -> np.ndarray:
        return self.c[0::2] + self.c[1::2]

    @property
    def T(self) -> int:
        return self.c.shape[1]

    def to_vector(self, idx: VariableIndex) -> np.ndarray:
        x = np.zeros(idx.nx)
        for kind in ("c", "f", "sv_tp", "v_cl", "v_op"):
            x[idx.local(kind)] = getattr(self, kind)
        return x

    @classmethod
    def from_vector(cls, idx: VariableIndex, x: np.ndarray) -> "FirstStageDecision":
        get = lambda kind: np.asarray(x)[idx.local(kind)]  # noqa: E731
        return cls(
            c=np.round(get("c")).astype(int),
            sv_tp=get("sv_tp").copy(),
            v_cl=np.round(get("v_cl")).astype(int),
            v_op=np.round(get("v_op")).astype(int),
            f=get("f").copy(),
        )

    @classmethod
    def from_status(cls, case: CaseData, status: np.ndarray) -> "FirstStageDecision":
        """Orient a radial line-status trajectory away from the grid-forming buses.

        Raises ``NotRadialError`` when some closed component has a cycle, no
        grid-forming bus, or more than one.
        """
        status = np.asarray(status, dtype=int)
        E, T = status.shape
        pos = case.node_pos
        roots = {pos[r] for r in case.roots}
        N = len(case.nodes)
        ends = [(pos[e.from_node], pos[e.to_node]) for e in case.edges]
        c = np.zeros((2 * E, T), dtype=int)
        f = np.zeros((2 * E, T))
        sv = np.ones((N, T))
        for t in range(T):
            adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(N)}
            for e, (a, b) in enumerate(ends):
                if status[e, t]:
                    adj[a].append((b, e))
                    adj[b].append((a, e))
            seen = set()
            parent_edge: dict[int, tuple[int, int]] = {}
            order = []
            for r in sorted(roots):
                if r in seen:
                    raise NotRadialError(f"step {t + 1}: two grid-forming buses share a microgrid")
                seen.add(r)
                sv[r, t] = 0
                queue = deque([r])
                while queue:
                    i = queue.popleft()
                    order.append(i)
                    for j, e in adj[i]:
                        if parent_edge.get(i, (None, None))[1] == e:
                            continue
                        if j in seen:
                            raise NotRadialError(f"step {t + 1}: closed lines form a cycle or join two roots")
                        seen.add(j)
                        parent_edge[j] = (i, e)
                        sv[j, t] = 0
                        queue.append(j)
            for e, (a, b) in enumerate(ends):
                if status[e, t] and a not in seen:
                    raise NotRadialError(f"step {t + 1}: closed line {case.edges[e].label} has no grid-forming bus")
            subtree = np.ones(N)
            for i in reversed(order):
                if i in parent_edge:
                    p, e = parent_edge[i]
                    arc = 2 * e if ends[e][0] == p else 2 * e + 1
                    c[arc, t] = 1
                    f[arc, t] = subtree[i]
                    subtree[p] += subtree[i]
        prev = np.array([1 if e.initially_closed else 0 for e in case.edges])[:, None]
        full = np.hstack([prev, status])
        delta = np.diff(full, axis=1)
        return cls(c=c, sv_tp=sv, v_cl=(delta > 0).astype(int), v_op=(delta < 0).astype(int), f=f)

    def switch_actions(self) -> np.ndarray:
        return (self.v_cl + self.v_op).sum(axis=0)

    def closed_lines(self, case: CaseData, t: int) -> list[str]:
        st = self.line_status[:, t]
        return [case.edges[e].label for e in np.flatnonzero(st > 0.5)]

    def membership(self, case: CaseData, t: int) -> dict[str, Optional[str]]:
        """Node id -> grid-forming bus feeding it at step ``t`` (None when de-energized)."""
        ids = case.node_ids
        pos = case.node_pos
        parent = {}
        for arc in np.flatnonzero(self.c[:, t] > 0.5):
            e = arc // 2
            a, b = case.edges[e].from_node, case.edges[e].to_node
            p, ch = (a, b) if arc % 2 == 0 else (b, a)
            parent[ch] = p
        roots = set(case.roots)
        out: dict[str, Optional[str]] = {}
        for nid in ids:
            cur, hops = nid, 0
            while cur in parent and hops <= len(ids):
                cur, hops = parent[cur], hops + 1
            energized = cur in roots and self.sv_tp[pos[nid], t] < 0.5
            out[nid] = cur if energized else None
        return out


@dataclass(frozen=True, eq=False)
class ScenarioRealization:
    """Line survival per edge and step: 1 intact, 0 failed."""

    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=np.int8))

    @classmethod
    def all_intact(cls, n_edges: int, T: int) -> "ScenarioRealization":
        return cls(np.ones((n_edges, T), dtype=np.int8))

    @property
    def key(self) -> bytes:
        return self.u.tobytes() + bytes(self.u.shape)

    def __eq__(self, other):
        return isinstance(other, ScenarioRealization) and self.u.shape == other.u.shape and np.array_equal(self.u, other.u)

    def __hash__(self):
        return hash(self.key)

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.u.astype(int), axis=1) <= 0))

    def failures_per_step(self) -> np.ndarray:
        return (1 - self.u).sum(axis=0)

    def in_support(self, k: int) -> bool:
        return self.is_monotone() and bool(np.all(self.failures_per_step() <= k))

    def failed_lines(self, case: CaseData, t: int) -> list[str]:
        return [case.edges[e].label for e in np.flatnonzero(self.u[:, t] == 0)]
