"""Modified IEEE 37-node study case.

Topology, line lengths and spot loads follow the IEEE 37-node test feeder,
collapsed to a single-phase equivalent: phase loads are summed and line
impedances use the positive-sequence value (z_self - z_mutual) of each
conductor configuration. Everything the study does not publish is a
constructed default and can be overridden:

* per-unit base 1000 kVA / 4.8 kV (Z_base = 23.04 ohm);
* tie-lines of configuration 723, 500 ft long;
* grid-forming DG capacity totals 150 % of peak demand, split 40/30/30;
* critical loads at ``DEFAULT_CRITICAL``;
* remote switches on the ties and on the lines in ``DEFAULT_SWITCHED``;
* a typhoon path crossing the feeder, two lines per step; ``mu_max`` is the
  cumulative probability a line has failed by the end of each step, and
  lines off the path do not fail.
"""
from __future__ import annotations

from typing import Any, Mapping, Optional, Sequence

from .netdata import CaseData, DgSpec, EdgeSpec, NodeSpec, resolve_defaults

FT_PER_MILE = 5280.0
V_BASE_KV = 4.8

# ohm/mile, positive sequence
CONFIG_Z1 = {
    "721": (0.2253, 0.2341),
    "722": (0.3122, 0.3299),
    "723": (0.8065, 0.4602),
    "724": (1.5748, 0.5020),
}

# (from, to, length ft, config)
FEEDER_LINES = [
    ("799", "701", 1850, "721"),
    ("701", "702", 960, "722"),
    ("702", "705", 400, "724"),
    ("702", "713", 360, "723"),
    ("702", "703", 1320, "722"),
    ("703", "727", 240, "724"),
    ("703", "730", 600, "723"),
    ("704", "714", 80, "724"),
    ("704", "720", 800, "723"),
    ("705", "742", 320, "724"),
    ("705", "712", 240, "724"),
    ("706", "725", 280, "724"),
    ("707", "724", 760, "724"),
    ("707", "722", 120, "724"),
    ("708", "733", 320, "723"),
    ("708", "732", 320, "724"),
    ("709", "731", 600, "723"),
    ("709", "708", 320, "723"),
    ("710", "735", 200, "724"),
    ("710", "736", 1280, "724"),
    ("711", "741", 400, "723"),
    ("711", "740", 200, "724"),
    ("713", "704", 520, "723"),
    ("714", "718", 520, "724"),
    ("720", "707", 920, "724"),
    ("720", "706", 600, "723"),
    ("727", "744", 280, "723"),
    ("730", "709", 200, "723"),
    ("733", "734", 560, "723"),
    ("734", "737", 640, "723"),
    ("734", "710", 520, "724"),
    ("737", "738", 400, "723"),
    ("738", "711", 400, "723"),
    ("744", "728", 200, "724"),
    ("744", "729", 280, "724"),
]
# 500 kVA, R = 0.09 %, X = 1.81 % on its own rating
TRANSFORMER = ("709", "775", 0.0009, 0.0181, 500.0)

TIE_LINES = [("736", "742"), ("725", "741"), ("732", "736"), ("718", "731")]
TIE_LENGTH_FT = 500
TIE_CONFIG = "723"

# summed three-phase spot loads, kW / kvar
SPOT_LOADS = {
    "701": (630, 315), "712": (85, 40), "713": (85, 40), "714": (38, 18), "718": (85, 40),
    "720": (85, 40), "722": (161, 80), "724": (42, 21), "725": (42, 21), "727": (42, 21),
    "728": (126, 63), "729": (42, 21), "730": (85, 40), "731": (85, 40), "732": (42, 21),
    "733": (85, 40), "734": (42, 21), "735": (85, 40), "736": (42, 21), "737": (140, 70),
    "738": (126, 62), "740": (85, 40), "741": (42, 21), "742": (93, 44), "744": (42, 21),
}

GRID_FORMING_NODES = ("702", "704", "710")
DEFAULT_CRITICAL = ("701", "712", "718", "722", "728", "731", "738", "742")
CRITICAL_WEIGHT = 100.0
NONCRITICAL_WEIGHT = 10.0

# lines hit in each step; every one of them can be bypassed through a tie-line
DEFAULT_TYPHOON_PATH = (
    ("702-703", "705-742"),
    ("703-730", "714-718"),
    ("709-708", "708-732"),
    ("734-737", "738-711"),
)

# remote-controlled sectionalizers; ties are always switchable, every other line is not
DEFAULT_SWITCHED = (
    "702-713", "713-704", "702-703", "703-730", "730-709", "709-708", "708-733", "734-710",
    "705-742", "714-718", "708-732", "734-737", "738-711", "711-741", "709-731", "710-736", "720-706",
)

DEFAULTS: dict[str, Any] = {
    "horizon_steps": 4,
    "step_hours": 0.5,
    "s_base_kva": 1000.0,
    "v_min": 0.95,
    "v_max": 1.05,
    "k": 2,
    "n_sw_max": 4,
    "big_m": 0.0,
    "beta_bound": 0.0,
    "load_profile": (0.85, 0.9, 0.95, 1.0),
    "dg_capacity_fraction": 1.5,
    "dg_shares": (0.4, 0.3, 0.3),
    "dg_q_ratio": 0.75,
    "critical_nodes": DEFAULT_CRITICAL,
    "typhoon_path": DEFAULT_TYPHOON_PATH,
    "switched_lines": DEFAULT_SWITCHED,
    "mu_path": 0.3,
    "mu_near": 0.0,
    "mu_base_rate": 0.0,
}


def _profile(values: Sequence[float], T: int) -> list[float]:
    vals = list(values)
    if len(vals) >= T:
        return vals[:T]
    return vals + [vals[-1]] * (T - len(vals))


def build_ieee37_case(overrides: Optional[Mapping[str, Any]] = None) -> CaseData:
    """Build the study case; unknown or inconsistent overrides raise ``ValueError``."""
    opts = dict(DEFAULTS)
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(DEFAULTS)
    if unknown:
        raise ValueError(f"unknown overrides: {sorted(unknown)}")
    opts.update(overrides)
    T = opts["horizon_steps"]
    if not isinstance(T, int) or T < 1:
        raise ValueError(f"horizon_steps must be a positive integer, got {T!r}")
    if not opts["step_hours"] > 0:
        raise ValueError("step_hours must be positive")
    if not 0 < opts["dg_capacity_fraction"]:
        raise ValueError("dg_capacity_fraction must be positive")
    if len(opts["dg_shares"]) != len(GRID_FORMING_NODES):
        raise ValueError("dg_shares needs one entry per grid-forming DG")
    for key in ("mu_path", "mu_near"):
        if not 0 <= opts[key] <= 1:
            raise ValueError(f"{key} must lie in [0,1]")

    s_base = float(opts["s_base_kva"])
    z_base = V_BASE_KV**2 * 1000.0 / s_base
    profile = _profile(opts["load_profile"], T)
    critical = set(opts["critical_nodes"])

    node_ids = sorted({a for a, *_ in FEEDER_LINES} | {b for _, b, *_ in FEEDER_LINES} | {TRANSFORMER[1]})
    nodes = []
    for nid in node_ids:
        p, q = SPOT_LOADS.get(nid, (0.0, 0.0))
        crit = nid in critical
        nodes.append(
            NodeSpec(
                id=nid,
                demand_p=tuple(round(p * f, 6) for f in profile),
                demand_q=tuple(round(q * f, 6) for f in profile),
                weight=CRITICAL_WEIGHT if crit else NONCRITICAL_WEIGHT,
                critical=crit,
            )
        )

    def z(length_ft, cfg):
        r, x = CONFIG_Z1[cfg]
        miles = length_ft / FT_PER_MILE
        return round(r * miles / z_base, 9), round(x * miles / z_base, 9)

    raw_edges = []
    for a, b, length, cfg in FEEDER_LINES:
        raw_edges.append((a, b, *z(length, cfg), False))
    ta, tb, tr, tx, rating = TRANSFORMER
    raw_edges.append((ta, tb, tr * s_base / rating, tx * s_base / rating, False))
    for a, b in TIE_LINES:
        raw_edges.append((a, b, *z(TIE_LENGTH_FT, TIE_CONFIG), True))

    mu = typhoon_profiles([(a, b) for a, b, *_ in raw_edges], T, opts)
    labels = {f"{a}-{b}" for a, b, *_ in raw_edges}
    switched = set(opts["switched_lines"]) if opts["switched_lines"] is not None else set(labels)
    if switched - labels:
        raise ValueError(f"switched_lines names unknown lines {sorted(switched - labels)}")
    edges = tuple(
        EdgeSpec(
            from_node=a, to_node=b, r=r, x=x, is_tie=tie, initially_closed=not tie, mu_max=mu[f"{a}-{b}"],
            switchable=tie or f"{a}-{b}" in switched,
        )
        for a, b, r, x, tie in raw_edges
    )

    peak = max(sum(n.demand_p[t] for n in nodes) for t in range(T))
    total_cap = opts["dg_capacity_fraction"] * peak
    dgs = tuple(
        DgSpec(
            node=node,
            p_max=(round(total_cap * share, 3),) * T,
            q_max=(round(total_cap * share * opts["dg_q_ratio"], 3),) * T,
            grid_forming=True,
        )
        for node, share in zip(GRID_FORMING_NODES, opts["dg_shares"])
    )
    case = CaseData(
        nodes=tuple(nodes),
        edges=edges,
        dgs=dgs,
        horizon_steps=T,
        step_hours=float(opts["step_hours"]),
        v_min=float(opts["v_min"]),
        v_max=float(opts["v_max"]),
        big_m=float(opts["big_m"]),
        k=int(opts["k"]),
        n_sw_max=int(opts["n_sw_max"]),
        beta_bound=float(opts["beta_bound"]),
        s_base_kva=s_base,
        name="ieee37-modified",
    )
    return resolve_defaults(case)


def typhoon_profiles(pairs: Sequence[tuple[str, str]], T: int, opts: Mapping[str, Any]) -> dict[str, tuple]:
    """Cumulative failure-probability bounds per line.

    A line on the path segment of step s jumps to ``mu_path`` from step s on;
    lines sharing a node with that segment rise to ``mu_near``. Every line
    carries a background risk growing by ``mu_base_rate`` per step.
    """
    path = [set(seg) for seg in opts["typhoon_path"]]
    labels = {f"{a}-{b}": (a, b) for a, b in pairs}
    for seg in path:
        for lab in seg:
            if lab not in labels:
                raise ValueError(f"typhoon path names unknown line {lab}")
    out = {}
    for lab, (a, b) in labels.items():
        level = 0.0
        prof = []
        for t in range(T):
            if t < len(path):
                seg = path[t]
                seg_nodes = {n for s in seg for n in labels[s]}
                if lab in seg:
                    level = max(level, opts["mu_path"])
                elif a in seg_nodes or b in seg_nodes:
                    level = max(level, opts["mu_near"])
            prof.append(round(min(1.0, max(level, opts["mu_base_rate"] * (t + 1))), 6))
        out[lab] = tuple(prof)
    return out
