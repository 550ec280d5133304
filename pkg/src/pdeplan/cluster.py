"""Commodity clusterings that tie deviation coefficients together.

CV buckets commodities by coefficient of variation of their forecasts.
CR groups commodities whose mean-demand routes share a service; CRU does the
same after lifting path capacities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .lowersolve import FlowSolution, evaluate_cpde
from .model import Instance, demand_stats
from .periodic import (
    DeviationVector,
    Number,
    alpha_bounds,
    alpha_to_demand,
    frozen_commodities,
    quantile,
)

CV_BREAKS_5 = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(9, 10))


@dataclass(frozen=True)
class Clustering:
    clusters: tuple[tuple[int, ...], ...]
    method: str

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def cluster_of(self, k: int) -> int:
        for i, c in enumerate(self.clusters):
            if k in c:
                return i
        raise KeyError(k)

    def to_json(self) -> str:
        return json.dumps({"method": self.method, "clusters": [list(c) for c in self.clusters]})

    @classmethod
    def from_json(cls, text: str) -> "Clustering":
        doc = json.loads(text)
        return cls(tuple(tuple(int(k) for k in c) for c in doc["clusters"]), str(doc["method"]))


def is_partition(clustering: Clustering, inst: Instance) -> bool:
    """True when the clusters are nonempty, disjoint and cover every non-frozen commodity."""
    seen: list[int] = [k for c in clustering.clusters for k in c]
    if any(len(c) == 0 for c in clustering.clusters) or len(seen) != len(set(seen)):
        return False
    expected = set(range(inst.K)) - frozen_commodities(inst)
    return set(seen) == expected


def _active(inst: Instance) -> list[int]:
    frozen = frozen_commodities(inst)
    return [k for k in range(inst.K) if k not in frozen]


def global_clustering(inst: Instance) -> Clustering:
    active = _active(inst)
    return Clustering((tuple(active),) if active else (), "global")


def singleton_clustering(inst: Instance) -> Clustering:
    return Clustering(tuple((k,) for k in _active(inst)), "singleton")


def coeff_variation(inst: Instance) -> dict[int, float]:
    """Population standard deviation over mean, for commodities with nonzero mean."""
    st = demand_stats(inst)
    out = {}
    for k in _active(inst):
        col = inst.forecasts.column(k)
        mean = st.mean[k]
        var = sum((Fraction(v) - mean) ** 2 for v in col) / len(col)
        out[k] = math.sqrt(var) / float(mean)
    return out


def cluster_cv(inst: Instance, n_c: int = 5) -> Clustering:
    if n_c < 1:
        raise ValueError("n_c must be at least 1")
    cv = coeff_variation(inst)
    if not cv:
        return Clustering((), "CV")
    levels = CV_BREAKS_5 if n_c == 5 else tuple(Fraction(j, n_c) for j in range(1, n_c))
    values = list(cv.values())
    cuts = [quantile(values, q) for q in levels]
    buckets: list[list[int]] = [[] for _ in range(len(cuts) + 1)]
    for k, s in cv.items():
        exact = Fraction(s)
        buckets[sum(1 for c in cuts if exact > c)].append(k)
    return Clustering(tuple(tuple(sorted(b)) for b in buckets if b), "CV")


def service_groups(inst: Instance, flow: FlowSolution) -> dict[int, frozenset[int]]:
    """group(k): k plus every commodity whose used network paths share a service with k's."""
    active = _active(inst)
    used: dict[int, set[str]] = {k: set() for k in active}
    for (pid, k), x in flow.flow.items():
        p = inst.path(pid)
        if x > 0 and not p.outsourcing and k in used:
            used[k] |= p.services
    return {
        k: frozenset([k] + [j for j in active if j != k and used[k] & used[j]])
        for k in active
    }


def select_groups(groups: dict[int, frozenset[int]], method: str) -> Clustering:
    """Greedy disjoint selection of the largest groups; leftovers form the last cluster."""
    ordered = sorted(set(groups.values()), key=lambda g: (-len(g), min(g), sorted(g)))
    chosen: list[tuple[int, ...]] = []
    taken: set[int] = set()
    for g in ordered:
        if len(g) > 1 and not (g & taken):
            chosen.append(tuple(sorted(g)))
            taken |= g
    rest = sorted(set(groups) - taken)
    if rest:
        chosen.append(tuple(rest))
    return Clustering(tuple(chosen), method)


def _route_clustering(inst: Instance, solve_on: Instance, method: str) -> Clustering:
    y = alpha_to_demand(solve_on, DeviationVector.ones(solve_on))
    bd = evaluate_cpde(solve_on, y)
    return select_groups(service_groups(inst, bd.mcnd_flow), method)


def cluster_cr(inst: Instance) -> Clustering:
    return _route_clustering(inst, inst, "CR")


def cluster_cru(inst: Instance) -> Clustering:
    return _route_clustering(inst, inst.uncapacitated(), "CRU")


def cluster_bounds(inst: Instance, clustering: Clustering) -> tuple[tuple[Fraction, Fraction], ...]:
    """Per-cluster range: smallest member lower bound to largest member upper bound."""
    b = alpha_bounds(inst)
    return tuple(
        (min(b[k][0] for k in c), max(b[k][1] for k in c)) for c in clustering.clusters
    )


def expand(clustering: Clustering, cluster_alphas: Sequence[Number], inst: Instance) -> DeviationVector:
    """Broadcast one value per cluster to its members, clamped to each member's bounds."""
    if len(cluster_alphas) != clustering.n_clusters:
        raise ValueError(
            f"expected {clustering.n_clusters} cluster values, got {len(cluster_alphas)}"
        )
    alpha = [Fraction(1)] * inst.K
    for c, a in zip(clustering.clusters, cluster_alphas):
        for k in c:
            alpha[k] = Fraction(a)
    return DeviationVector.clamped(inst, alpha)
