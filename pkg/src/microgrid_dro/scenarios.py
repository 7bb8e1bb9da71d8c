"""Monte Carlo contingency sampling and fixed-policy VoLL evaluation.

Failure probabilities are read as cumulative: ``p[e, t]`` is the probability
that line ``e`` has failed by the end of step ``t``. A line still in service
at the start of step ``t`` fails during it with the incremental hazard
``(p[t] - p[t-1]) / (1 - p[t-1])``, which reproduces the marginals exactly.
A constant profile therefore means failures can only happen at step 1.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from .dro.ccg import Solution
from .model import DispatchError, ScenarioRealization, evaluate_q
from .netdata import CaseData

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplerConfig:
    n_scenarios: int = 1000
    seed: int = 0
    perturbation: float = 0.1
    probability_source: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_scenarios < 1:
            raise ValueError("n_scenarios must be at least 1")
        if not 0 <= self.perturbation <= 1:
            raise ValueError("perturbation must lie in [0, 1]")

    def marginals(self, case: CaseData) -> np.ndarray:
        if self.probability_source is not None:
            p = np.asarray(self.probability_source, dtype=float)
            if p.shape != (len(case.edges), case.T):
                raise ValueError(f"probability_source must have shape {(len(case.edges), case.T)}")
            return np.clip(p, 0.0, 1.0)
        return np.array([e.mu_max for e in case.edges], dtype=float).reshape(len(case.edges), case.T)


def hazards(p: np.ndarray) -> np.ndarray:
    """Per-step conditional failure probabilities from cumulative marginals (last axis is time)."""
    p = np.clip(p, 0.0, 1.0)
    prev = np.concatenate([np.zeros(p.shape[:-1] + (1,)), p[..., :-1]], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(prev < 1.0, (p - prev) / (1.0 - prev), 1.0)
    return np.clip(h, 0.0, 1.0)


def perturbed_marginals(p: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Shift each line's profile by ``eps * p * (1 - p)``.

    Close to a relative change of ``eps`` for small ``p``. Certain and
    impossible failures stay fixed, the map is increasing in ``p`` for
    ``|eps| <= 1`` (profiles stay cumulative), and it is linear in ``eps``,
    so a symmetric ``eps`` leaves the marginals unbiased.
    """
    p = np.clip(p, 0.0, 1.0)
    return np.clip(p + eps[..., None] * p * (1.0 - p), 0.0, 1.0)


def sample_matrix(case: CaseData, cfg: SamplerConfig) -> np.ndarray:
    """Survival trajectories as an int8 array of shape (n, E, T)."""
    rng = np.random.default_rng(cfg.seed)
    p = cfg.marginals(case)
    n, (E, T) = cfg.n_scenarios, p.shape
    eps = rng.uniform(-cfg.perturbation, cfg.perturbation, size=(n, E)) if cfg.perturbation > 0 else np.zeros((n, E))
    h = hazards(perturbed_marginals(p[None], eps))
    draws = rng.random((n, E, T))
    failed_at = draws < h
    # once failed, failed for good
    return (~np.logical_or.accumulate(failed_at, axis=2)).astype(np.int8)


def sample_scenarios(case: CaseData, cfg: SamplerConfig) -> list[ScenarioRealization]:
    return [ScenarioRealization(u) for u in sample_matrix(case, cfg)]


@dataclass
class BoxStats:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    outliers: list[float]

    @classmethod
    def of(cls, values: np.ndarray) -> "BoxStats":
        v = np.asarray(values, dtype=float)
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        iqr = q3 - q1
        lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        return cls(float(v.min()), float(q1), float(med), float(q3), float(v.max()),
                    sorted(float(o) for o in v[(v < lo) | (v > hi)]))

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.min, self.q1, self.median, self.q3, self.max)


@dataclass
class EvalStats:
    per_scenario: np.ndarray  # total VoLL in $, one per scenario
    per_scenario_step: np.ndarray  # (n, T) VoLL in $
    n_infeasible: int = 0
    out_of_support: float = 0.0
    max_residual: float = 0.0
    seed: Optional[int] = None

    @property
    def n(self) -> int:
        return int(self.per_scenario.size)

    @property
    def expected_total(self) -> float:
        return float(self.per_scenario.mean())

    @property
    def per_step_expected(self) -> np.ndarray:
        return self.per_scenario_step.mean(axis=0)

    @property
    def box(self) -> BoxStats:
        return BoxStats.of(self.per_scenario)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_scenarios": self.n,
            "expected_total": self.expected_total,
            "per_step_expected": [float(v) for v in self.per_step_expected],
            "box": self.box.__dict__,
            "n_infeasible": self.n_infeasible,
            "out_of_support_fraction": self.out_of_support,
            "per_scenario": [float(v) for v in self.per_scenario],
        }


def evaluate_policy(
    solution: Union[Solution, "object"],
    scenarios: Sequence[ScenarioRealization],
    case: CaseData,
    backend: Optional[str] = None,
    seed: Optional[int] = None,
) -> EvalStats:
    """Dispatch every scenario against the fixed boundaries of ``solution``.

    Identical trajectories share one LP solve.
    """
    x = getattr(solution, "first_stage", solution)
    cache: dict[bytes, tuple[np.ndarray, float]] = {}
    rows = np.zeros((len(scenarios), case.T))
    outside = 0
    for i, scen in enumerate(scenarios):
        if not scen.in_support(case.k):
            outside += 1
        hit = cache.get(scen.key)
        if hit is None:
            try:
                res = evaluate_q(x, scen, case, backend=backend, context=f"scenario {i}")
            except DispatchError as exc:
                raise DispatchError(f"scenario {i}: {exc}") from exc
            hit = cache[scen.key] = (res.voll_per_step, res.max_residual)
        rows[i] = hit[0]
    logger.debug("evaluated %d scenarios with %d distinct trajectories", len(scenarios), len(cache))
    return EvalStats(
        per_scenario=rows.sum(axis=1),
        per_scenario_step=rows,
        out_of_support=outside / max(1, len(scenarios)),
        max_residual=max((r for _, r in cache.values()), default=0.0),
        seed=seed,
    )


@dataclass
class ComparisonTable:
    methods: list[str]
    stats: list[EvalStats]

    def step_rows(self) -> list[list[float]]:
        """One row per step, then the Total row; one column per method."""
        per_step = [s.per_step_expected for s in self.stats]
        rows = [[float(col[t]) for col in per_step] for t in range(len(per_step[0]))]
        rows.append([s.expected_total for s in self.stats])
        return rows

    def reductions(self) -> dict[str, float]:
        """Relative reduction of the first method's expected total vs each other method."""
        first = self.stats[0].expected_total
        out = {}
        for name, s in zip(self.methods[1:], self.stats[1:]):
            other = s.expected_total
            out[name] = 0.0 if other == 0 else (other - first) / other
        return out

    def paired_tests(self) -> dict[str, float]:
        """One-sided paired t-test p-values for 'first method has lower VoLL'."""
        base = self.stats[0].per_scenario
        out = {}
        for name, s in zip(self.methods[1:], self.stats[1:]):
            d = base - s.per_scenario
            if np.allclose(d, d[0]):
                out[name] = 0.0 if d[0] < 0 else 1.0
            else:
                out[name] = float(stats.ttest_rel(base, s.per_scenario, alternative="less").pvalue)
        return out

    def to_dict(self) -> dict:
        labels = [f"step {t + 1}" for t in range(len(self.stats[0].per_step_expected))] + ["Total"]
        return {
            "seed": self.stats[0].seed,
            "methods": self.methods,
            "rows": [{"row": lab, **dict(zip(self.methods, r))} for lab, r in zip(labels, self.step_rows())],
            "box": {m: s.box.__dict__ for m, s in zip(self.methods, self.stats)},
            "reductions": self.reductions(),
            "paired_p_values": self.paired_tests(),
            "out_of_support_fraction": self.stats[0].out_of_support,
        }


def compare_methods(
    solutions: Sequence[Solution],
    scenarios: Sequence[ScenarioRealization],
    case: CaseData,
    backend: Optional[str] = None,
    labels: Optional[Sequence[str]] = None,
    seed: Optional[int] = None,
) -> ComparisonTable:
    names = list(labels) if labels is not None else [s.method for s in solutions]
    return ComparisonTable(names, [evaluate_policy(s, scenarios, case, backend, seed=seed) for s in solutions])


# writers --------------------------------------------------------------------------------------


def _dump(obj: dict, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    return path


def write_stats(st: EvalStats, json_path: Union[str, Path], csv_path: Union[str, Path]) -> None:
    _dump(st.to_dict(), json_path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    T = st.per_scenario_step.shape[1]
    w.writerow(["scenario"] + [f"step_{t + 1}" for t in range(T)] + ["total"])
    for i, (row, tot) in enumerate(zip(st.per_scenario_step, st.per_scenario)):
        w.writerow([i] + [repr(float(v)) for v in row] + [repr(float(tot))])
    Path(csv_path).write_text(buf.getvalue(), encoding="utf-8")


def box_csv(methods: Sequence[str], boxes: Sequence[BoxStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "min", "q1", "median", "q3", "max", "outliers"])
    for m, b in zip(methods, boxes):
        w.writerow([m, *(repr(v) for v in b.as_tuple()), ";".join(repr(o) for o in b.outliers)])
    return buf.getvalue()


def write_comparison(table: ComparisonTable, out_dir: Union[str, Path], stem: str = "comparison") -> list[Path]:
    out = Path(out_dir)
    paths = [_dump(table.to_dict(), out / f"{stem}.json")]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row"] + table.methods)
    labels = [f"step {t + 1}" for t in range(len(table.step_rows()) - 1)] + ["Total"]
    for lab, r in zip(labels, table.step_rows()):
        w.writerow([lab] + [repr(v) for v in r])
    (out / f"{stem}.csv").write_text(buf.getvalue(), encoding="utf-8")
    (out / f"{stem}_box.csv").write_text(box_csv(table.methods, [s.box for s in table.stats]), encoding="utf-8")
    paths += [out / f"{stem}.csv", out / f"{stem}_box.csv"]
    return paths
