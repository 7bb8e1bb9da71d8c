"""Case data model, JSON ingestion and validation.

Quantities in files carry explicit units (kW, kvar, p.u., $/kWh, hours).
Power is converted to per-unit on ``s_base_kva`` only inside the model builders.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Union

import networkx as nx


class CaseFileError(ValueError):
    """Problem with a case file; ``key`` names the offending entry."""

    def __init__(self, message: str, key: str = ""):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class CaseParseError(CaseFileError):
    pass


class CaseSchemaError(CaseFileError):
    pass


def _floats(values: Iterable[Any]) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class NodeSpec:
    id: str
    demand_p: tuple[float, ...]
    demand_q: tuple[float, ...]
    weight: float
    critical: bool = False


@dataclass(frozen=True)
class EdgeSpec:
    from_node: str
    to_node: str
    r: float
    x: float
    is_tie: bool = False
    initially_closed: bool = True
    mu_max: tuple[float, ...] = ()
    switchable: bool = True  # False: no remote switch, status stays at initially_closed

    @property
    def key(self) -> frozenset:
        return frozenset((self.from_node, self.to_node))

    @property
    def label(self) -> str:
        return f"{self.from_node}-{self.to_node}"


@dataclass(frozen=True)
class DgSpec:
    node: str
    p_max: tuple[float, ...]
    q_max: tuple[float, ...]
    grid_forming: bool = True


@dataclass(frozen=True)
class CaseData:
    nodes: tuple[NodeSpec, ...]
    edges: tuple[EdgeSpec, ...]
    dgs: tuple[DgSpec, ...]
    horizon_steps: int
    step_hours: float
    v_min: float = 0.95
    v_max: float = 1.05
    big_m: float = 0.0
    k: int = 1
    n_sw_max: int = 0
    beta_bound: float = 0.0
    s_base_kva: float = 1000.0
    name: str = "case"

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "dgs", tuple(self.dgs))

    @property
    def T(self) -> int:
        return self.horizon_steps

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    @property
    def node_pos(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    @property
    def roots(self) -> list[str]:
        """Grid-forming buses; each one roots exactly one microgrid."""
        seen = []
        for d in self.dgs:
            if d.grid_forming and d.node not in seen:
                seen.append(d.node)
        return seen

    def total_demand_kw(self, t: int) -> float:
        return sum(n.demand_p[t] for n in self.nodes)

    def total_weighted_demand(self) -> float:
        return sum(n.weight * p for n in self.nodes for p in n.demand_p)


def default_big_m(case: CaseData) -> float:
    """1.2 x the largest per-step power quantity in the system, in p.u."""
    peak = 0.0
    for t in range(case.T):
        p = sum(n.demand_p[t] for n in case.nodes)
        q = sum(n.demand_q[t] for n in case.nodes)
        gp = sum(d.p_max[t] for d in case.dgs)
        gq = sum(d.q_max[t] for d in case.dgs)
        peak = max(peak, p, q, gp, gq)
    return 1.2 * peak / case.s_base_kva if peak > 0 else 1.0


def resolve_defaults(case: CaseData) -> CaseData:
    """Fill ``big_m``/``beta_bound`` when left at 0 (meaning "derive from the data")."""
    updates = {}
    if not case.big_m:
        updates["big_m"] = default_big_m(case)
    if not case.beta_bound:
        updates["beta_bound"] = max(case.total_weighted_demand(), 1.0)
    return replace(case, **updates) if updates else case


# ---------------------------------------------------------------- validation


@dataclass
class ValidationIssue:
    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.subject}: {self.message}"


@dataclass
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, code: str, subject: str, message: str) -> None:
        self.issues.append(ValidationIssue(code, subject, message))

    def codes(self) -> list[str]:
        return [i.code for i in self.issues]

    def __len__(self) -> int:
        return len(self.issues)

    def __str__(self) -> str:
        return "\n".join(str(i) for i in self.issues) or "ok"


def validate_case(case: CaseData) -> ValidationReport:
    rep = ValidationReport()
    T = case.horizon_steps
    if not isinstance(T, int) or T < 1:
        rep.add("horizon", "meta", f"horizon_steps must be a positive integer, got {T!r}")
        return rep
    if not case.step_hours > 0:
        rep.add("step_hours", "meta", "step_hours must be positive")
    if not case.s_base_kva > 0:
        rep.add("s_base", "meta", "s_base_kva must be positive")

    ids = [n.id for n in case.nodes]
    dup = {i for i in ids if ids.count(i) > 1}
    for i in sorted(dup):
        rep.add("duplicate_node", i, "node id appears more than once")
    for n in case.nodes:
        for name, arr in (("demand_p", n.demand_p), ("demand_q", n.demand_q)):
            if len(arr) != T:
                rep.add("arity", n.id, f"{name} has length {len(arr)}, expected {T}")
            if any(v < 0 or not math.isfinite(v) for v in arr):
                rep.add("negative_demand", n.id, f"{name} has negative or non-finite entries")
        if not n.weight > 0:
            rep.add("weight", n.id, "weight must be positive")
    crit = [n.weight for n in case.nodes if n.critical]
    noncrit = [n.weight for n in case.nodes if not n.critical]
    if crit and noncrit and min(crit) <= max(noncrit):
        rep.add("critical_weight", "nodes", "every critical weight must exceed every non-critical weight")

    known = set(ids)
    pairs: set[frozenset] = set()
    for e in case.edges:
        if e.from_node == e.to_node:
            rep.add("self_loop", e.label, "from_node equals to_node")
        for end in (e.from_node, e.to_node):
            if end not in known:
                rep.add("unknown_node", e.label, f"endpoint {end} is not a node")
        if e.key in pairs:
            rep.add("duplicate_edge", e.label, "unordered pair already present")
        pairs.add(e.key)
        if len(e.mu_max) != T:
            rep.add("arity", e.label, f"mu_max has length {len(e.mu_max)}, expected {T}")
        if any(not (0.0 <= m <= 1.0) for m in e.mu_max):
            rep.add("mu_range", e.label, "mu_max out of [0,1]")
        if e.r < 0 or e.x < 0:
            rep.add("impedance", e.label, "r and x must be non-negative")

    gf_count: dict[str, int] = {}
    for d in case.dgs:
        if d.node not in known:
            rep.add("unknown_node", f"dg@{d.node}", "DG node is not a node")
        for name, arr in (("p_max", d.p_max), ("q_max", d.q_max)):
            if len(arr) != T:
                rep.add("arity", f"dg@{d.node}", f"{name} has length {len(arr)}, expected {T}")
            if any(v < 0 for v in arr):
                rep.add("dg_capacity", f"dg@{d.node}", f"{name} has negative entries")
        if d.grid_forming:
            gf_count[d.node] = gf_count.get(d.node, 0) + 1
    for node, cnt in sorted(gf_count.items()):
        if cnt > 1:
            rep.add("multiple_grid_forming", node, f"{cnt} grid-forming DGs on one node")
    if not gf_count:
        rep.add("no_grid_forming", "dgs", "at least one grid-forming DG is required")

    if case.nodes and not dup:
        g = nx.Graph()
        g.add_nodes_from(ids)
        g.add_edges_from((e.from_node, e.to_node) for e in case.edges if e.from_node in known and e.to_node in known)
        if not nx.is_connected(g):
            rep.add("disconnected", "edges", "network is not connected with all edges closed")
        fixed = nx.Graph()
        fixed.add_nodes_from(ids)
        fixed.add_edges_from((e.from_node, e.to_node) for e in case.edges
                             if not e.switchable and e.initially_closed and e.from_node in known and e.to_node in known)
        if not nx.is_forest(fixed):
            rep.add("fixed_cycle", "edges", "lines without switches close a loop")
        for comp in nx.connected_components(fixed):
            if len(comp & set(gf_count)) > 1:
                rep.add("fixed_roots", "edges", "lines without switches join two grid-forming buses")

    if not (0 <= case.k <= len(case.edges)):
        rep.add("budget", "params", f"k={case.k} must lie in [0, {len(case.edges)}]")
    if not (case.v_min < 1.0 < case.v_max):
        rep.add("voltage_limits", "params", "need v_min < 1 < v_max")
    if case.n_sw_max < 0:
        rep.add("switch_budget", "params", "n_sw_max must be non-negative")
    if not case.big_m > 0:
        rep.add("big_m", "params", "big_m must be positive")
    if not case.beta_bound > 0:
        rep.add("beta_bound", "params", "beta_bound must be positive")
    return rep


# ------------------------------------------------------------------ file I/O


def case_to_dict(case: CaseData) -> dict:
    return {
        "name": case.name,
        "meta": {"s_base_kva": case.s_base_kva, "horizon_steps": case.horizon_steps, "step_hours": case.step_hours},
        "params": {
            "v_min": case.v_min,
            "v_max": case.v_max,
            "big_m": case.big_m,
            "k": case.k,
            "n_sw_max": case.n_sw_max,
            "beta_bound": case.beta_bound,
        },
        "nodes": [
            {**asdict(n), "demand_p": list(n.demand_p), "demand_q": list(n.demand_q)} for n in case.nodes
        ],
        "edges": [{**asdict(e), "mu_max": list(e.mu_max)} for e in case.edges],
        "dgs": [{**asdict(d), "p_max": list(d.p_max), "q_max": list(d.q_max)} for d in case.dgs],
    }


def dumps_case(case: CaseData) -> str:
    return json.dumps(case_to_dict(case), indent=2)


def save_case(case: CaseData, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(dumps_case(case) + "\n", encoding="utf-8")
    return path


def case_fingerprint(case: CaseData) -> str:
    blob = json.dumps(case_to_dict(case), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _require(obj: dict, key: str, where: str):
    if not isinstance(obj, dict):
        raise CaseSchemaError("expected an object", where)
    if key not in obj:
        raise CaseSchemaError("missing field", f"{where}.{key}" if where else key)
    return obj[key]


def _series(obj: dict, key: str, where: str, T: int) -> tuple[float, ...]:
    raw = _require(obj, key, where)
    if isinstance(raw, (int, float)):
        return (float(raw),) * T
    if not isinstance(raw, list):
        raise CaseSchemaError("expected a number or a list", f"{where}.{key}")
    if len(raw) != T:
        raise CaseSchemaError(f"length {len(raw)} does not match horizon_steps={T}", f"{where}.{key}")
    try:
        return _floats(raw)
    except (TypeError, ValueError):
        raise CaseSchemaError("non-numeric entry", f"{where}.{key}") from None


def case_from_dict(data: dict) -> CaseData:
    meta = _require(data, "meta", "")
    params = _require(data, "params", "")
    try:
        T = int(_require(meta, "horizon_steps", "meta"))
        step_hours = float(_require(meta, "step_hours", "meta"))
        s_base = float(_require(meta, "s_base_kva", "meta"))
    except (TypeError, ValueError) as exc:
        raise CaseSchemaError(f"bad value ({exc})", "meta") from None

    nodes = []
    for i, raw in enumerate(_require(data, "nodes", "")):
        nid = str(_require(raw, "id", f"nodes[{i}]"))
        where = f"nodes[{nid}]"
        nodes.append(
            NodeSpec(
                id=nid,
                demand_p=_series(raw, "demand_p", where, T),
                demand_q=_series(raw, "demand_q", where, T),
                weight=float(_require(raw, "weight", where)),
                critical=bool(raw.get("critical", False)),
            )
        )
    edges = []
    for i, raw in enumerate(_require(data, "edges", "")):
        where = f"edges[{i}]"
        a, b = str(_require(raw, "from_node", where)), str(_require(raw, "to_node", where))
        where = f"edges[{a}-{b}]"
        edges.append(
            EdgeSpec(
                from_node=a,
                to_node=b,
                r=float(_require(raw, "r", where)),
                x=float(_require(raw, "x", where)),
                is_tie=bool(raw.get("is_tie", False)),
                initially_closed=bool(raw.get("initially_closed", not raw.get("is_tie", False))),
                mu_max=_series(raw, "mu_max", where, T),
                switchable=bool(raw.get("switchable", True)),
            )
        )
    dgs = []
    for i, raw in enumerate(_require(data, "dgs", "")):
        node = str(_require(raw, "node", f"dgs[{i}]"))
        where = f"dgs[{node}]"
        dgs.append(
            DgSpec(
                node=node,
                p_max=_series(raw, "p_max", where, T),
                q_max=_series(raw, "q_max", where, T),
                grid_forming=bool(raw.get("grid_forming", True)),
            )
        )

    def num(key, cast=float, default=None):
        val = params.get(key, default) if default is not None else _require(params, key, "params")
        if val is None:
            return cast(0)
        try:
            return cast(val)
        except (TypeError, ValueError):
            raise CaseSchemaError("bad value", f"params.{key}") from None

    case = CaseData(
        nodes=tuple(nodes),
        edges=tuple(edges),
        dgs=tuple(dgs),
        horizon_steps=T,
        step_hours=step_hours,
        v_min=num("v_min"),
        v_max=num("v_max"),
        big_m=num("big_m"),
        k=num("k", int),
        n_sw_max=num("n_sw_max", int),
        beta_bound=num("beta_bound"),
        s_base_kva=s_base,
        name=str(data.get("name", "case")),
    )
    return resolve_defaults(case)


def loads_case(text: str) -> CaseData:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise CaseSchemaError("top level must be an object")
    return case_from_dict(data)


def load_case(path: Union[str, Path]) -> CaseData:
    """Read a case file. Null ``big_m``/``beta_bound`` are replaced by data-derived defaults."""
    text = Path(path).read_text(encoding="utf-8")
    return loads_case(text)
