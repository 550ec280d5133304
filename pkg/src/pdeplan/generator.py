"""Seeded synthetic instances with tunable resource sharing and tightness.

Commodities ride shared network paths, one per service label. A service's
path serves every commodity incident to it, so ``tau`` (commodities per
service) sets how much capacity is shared, and ``capacity_ratio`` (path
capacity over the mean demand it serves) sets how much gets outsourced.
"""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from typing import Any, Optional

from .model import Commodity, DemandMatrix, Instance, Path, toy1, validate_instance


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    n_commodities: int = 6
    periods: int = 10
    paths_per_commodity: int = 3  # network paths + one outsourcing path
    tau: float = 2.0
    capacity_ratio: float = 1.0
    mean_demand: tuple[int, int] = (2, 8)
    cv_max: float = 0.6
    design_cost: tuple[int, int] = (10, 40)
    flow_cost: tuple[int, int] = (1, 10)
    flow_step: int = 1
    out_cost: int = 100
    observed: bool = True
    preset: Optional[str] = None

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "GeneratorSpec":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise GeneratorError(f"unknown generator fields: {sorted(unknown)}")
        vals = dict(doc)
        for key in ("mean_demand", "design_cost", "flow_cost"):
            if key in vals:
                vals[key] = tuple(vals[key])
        return cls(**vals)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for key in ("mean_demand", "design_cost", "flow_cost"):
            d[key] = list(d[key])
        return d


PRESETS: dict[str, GeneratorSpec] = {
    # ample capacity, design costs small next to flow-cost differences
    "loose": GeneratorSpec(
        n_commodities=4, periods=6, paths_per_commodity=3, tau=2.0, capacity_ratio=10.0,
        mean_demand=(2, 5), cv_max=0.4, design_cost=(1, 3), flow_cost=(1, 8), flow_step=5,
        out_cost=100,
    ),
    # shared capacity below mean load, volatile demand, and design costs that
    # only pay off at peak volumes
    "tight": GeneratorSpec(
        n_commodities=4, periods=6, paths_per_commodity=3, tau=2.0, capacity_ratio=0.7,
        mean_demand=(3, 6), cv_max=0.9, design_cost=(80, 160), flow_cost=(1, 10),
        out_cost=40,
    ),
}


def _check(spec: GeneratorSpec) -> None:
    if spec.n_commodities < 1 or spec.periods < 1:
        raise GeneratorError("need at least one commodity and one period")
    if spec.paths_per_commodity < 2:
        raise GeneratorError("paths_per_commodity must be at least 2 (one is outsourcing)")
    if not 1 <= spec.tau <= spec.n_commodities:
        raise GeneratorError(
            f"tau target {spec.tau} must lie in [1, n_commodities={spec.n_commodities}]"
        )
    if spec.capacity_ratio <= 0:
        raise GeneratorError("capacity_ratio must be positive")
    lo, hi = spec.mean_demand
    if not 0 <= lo <= hi:
        raise GeneratorError("mean_demand must be an ordered nonnegative range")
    if spec.cv_max < 0:
        raise GeneratorError("cv_max must be nonnegative")
    worst_flow = spec.flow_cost[1] * spec.flow_step
    if spec.out_cost <= worst_flow:
        raise GeneratorError("out_cost must exceed every network flow cost")


def _demand_rows(rng: random.Random, means: list[int], cvs: list[float], T: int) -> list[list[int]]:
    return [
        [max(0, round(rng.gauss(m, c * m))) for m, c in zip(means, cvs)]
        for _ in range(T)
    ]


def generate(spec: GeneratorSpec, seed: int = 0) -> Instance:
    """Build a valid instance; identical (spec, seed) always give identical output."""
    if spec.preset == "toy1":
        return toy1()
    label = spec.preset or "custom"
    if spec.preset is not None:
        if spec.preset not in PRESETS:
            raise GeneratorError(f"unknown preset {spec.preset!r}")
        spec = PRESETS[spec.preset]
    _check(spec)
    rng = random.Random(seed)
    K, T = spec.n_commodities, spec.periods
    m = spec.paths_per_commodity - 1
    n_services = max(m, round(K * m / spec.tau))

    incident: list[list[int]] = [[] for _ in range(n_services)]
    for k in range(K):
        for s in rng.sample(range(n_services), m):
            incident[s].append(k)
    incident = [sorted(ks) for ks in incident if ks]

    means = [rng.randint(*spec.mean_demand) for _ in range(K)]
    cvs = [rng.uniform(0, spec.cv_max) for _ in range(K)]
    forecasts = _demand_rows(rng, means, cvs, T)
    observed = _demand_rows(rng, means, cvs, T) if spec.observed else None

    n_nodes = max(2, K)
    commodities = []
    for k in range(K):
        o, d = rng.sample(range(n_nodes), 2)
        commodities.append(Commodity(k, f"N{o}", f"N{d}", rng.choice(("40", "53"))))

    fmean = [Fraction(sum(r[k] for r in forecasts), T) for k in range(K)]
    paths = []
    for s, ks in enumerate(incident):
        load = sum(fmean[k] for k in ks)
        cap = max(1, math.ceil(Fraction(spec.capacity_ratio).limit_denominator(1000) * load))
        paths.append(
            Path(
                id=len(paths),
                served=frozenset(ks),
                capacity=cap,
                design_cost=Fraction(rng.randint(*spec.design_cost)),
                flow_cost=Fraction(rng.randint(*spec.flow_cost) * spec.flow_step),
                services=frozenset({f"S{s}"}),
            )
        )
    for k in range(K):
        paths.append(
            Path(
                id=len(paths),
                served=frozenset({k}),
                capacity=None,
                design_cost=Fraction(0),
                flow_cost=Fraction(spec.out_cost),
                outsourcing=True,
            )
        )

    inst = Instance(
        commodities=tuple(commodities),
        paths=tuple(paths),
        forecasts=DemandMatrix.from_rows(forecasts),
        observed=None if observed is None else DemandMatrix.from_rows(observed),
        name=f"gen-{label}-{seed}",
    )
    problems = validate_instance(inst)
    if problems:  # pragma: no cover - construction guarantees validity
        raise GeneratorError("generated instance is invalid: " + "; ".join(map(str, problems)))
    return inst
