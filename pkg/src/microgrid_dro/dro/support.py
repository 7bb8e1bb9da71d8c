"""Support set of line-survival trajectories: monotone failures, at most k failed lines per step."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from ..model import ScenarioRealization
from ..netdata import CaseData

MAX_SUPPORT = 100_000


class SupportTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class AmbiguitySpec:
    """Moment bounds ``E[1 - u[e,t]] <= mu_max[e,t]`` over the support D."""

    mu_max: np.ndarray
    k: int

    @classmethod
    def from_case(cls, case: CaseData) -> "AmbiguitySpec":
        return cls(np.array([e.mu_max for e in case.edges], dtype=float).reshape(len(case.edges), case.T), case.k)

    def slater_witness(self) -> ScenarioRealization:
        """The all-intact trajectory: always in D and feasible for every moment row as a point mass."""
        return ScenarioRealization.all_intact(*self.mu_max.shape)

    def is_nonempty(self) -> bool:
        return bool(np.all(self.mu_max >= 0)) and self.k >= 0


def support_size(n_edges: int, T: int, k: int) -> int:
    """Each failing line picks one of T failure steps; at most k lines fail by the last step."""
    return sum(comb(n_edges, j) * T**j for j in range(0, min(k, n_edges) + 1))


def enumerate_support(case: CaseData, limit: int = MAX_SUPPORT) -> list[ScenarioRealization]:
    """Every trajectory in D, skipping those with a line down at a step where its ``mu_max`` is 0.

    Such a trajectory can carry no probability, and leaving it out keeps the
    robust baseline on the same set of physically possible events.
    """
    E, T, k = len(case.edges), case.T, case.k
    size = support_size(E, T, k)
    if size > limit:
        raise SupportTooLarge(f"support has {size} trajectories (limit {limit})")
    mu = AmbiguitySpec.from_case(case).mu_max
    out = []
    for j in range(0, min(k, E) + 1):
        for failed in itertools.combinations(range(E), j):
            for times in itertools.product(range(T), repeat=j):
                if any(np.any(mu[e, tau:] <= 0.0) for e, tau in zip(failed, times)):
                    continue
                u = np.ones((E, T), dtype=np.int8)
                for e, tau in zip(failed, times):
                    u[e, tau:] = 0
                out.append(ScenarioRealization(u))
    return out
