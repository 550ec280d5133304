"""Instance characterization (resource sharing, outsourcing) and gap reporting."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .lowersolve import solve_mcnd
from .model import Instance
from .periodic import DeviationVector, alpha_to_demand, round_half_up


def _services_by_commodity(inst: Instance) -> dict[int, set[str]]:
    out: dict[int, set[str]] = {c.id: set() for c in inst.commodities}
    for p in inst.paths:
        for k in p.served:
            out.setdefault(k, set()).update(p.services)
    return out


def tau(inst: Instance) -> Optional[Fraction]:
    """Mean number of distinct commodities that can ride each service label."""
    per_service: dict[str, set[int]] = {}
    for p in inst.paths:
        for s in p.services:
            per_service.setdefault(s, set()).update(p.served)
    if not per_service:
        return None
    return Fraction(sum(len(v) for v in per_service.values()), len(per_service))


def kappa(inst: Instance) -> Optional[Fraction]:
    """Mean number of other commodities sharing at least one service, per commodity."""
    svc = _services_by_commodity(inst)
    if not any(svc.values()) or not svc:
        return None
    total = 0
    for k, sk in svc.items():
        total += sum(1 for j, sj in svc.items() if j != k and sk & sj)
    return Fraction(total, len(svc))


def outsourced_set(inst: Instance) -> frozenset[int]:
    """Commodities with some outsourced flow in the MCND plan at mean demand."""
    y = alpha_to_demand(inst, DeviationVector.ones(inst))
    flow = solve_mcnd(inst, y).flow
    return frozenset(k for (pid, k), x in flow.flow.items() if x > 0 and inst.path(pid).outsourcing)


@dataclass(frozen=True)
class InstanceProfile:
    tau: Optional[Fraction]
    kappa: Optional[Fraction]
    k_l: frozenset[int]
    n_commodities: int
    n_outsourced: int
    n_paths: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tau"] = None if self.tau is None else str(self.tau)
        d["kappa"] = None if self.kappa is None else str(self.kappa)
        d["k_l"] = sorted(self.k_l)
        return d


def profile(inst: Instance) -> InstanceProfile:
    kl = outsourced_set(inst)
    return InstanceProfile(
        tau=tau(inst),
        kappa=kappa(inst),
        k_l=kl,
        n_commodities=inst.K,
        n_outsourced=len(kl),
        n_paths=len(inst.paths),
    )


def gap_table(results: Sequence[tuple[str, Fraction]]) -> list[tuple[str, Optional[int]]]:
    """Gap of each cost to the best one, as a whole percent (None when best is 0)."""
    if not results:
        raise ValueError("gap_table needs at least one result")
    best = min(Fraction(c) for _, c in results)
    if best == 0:
        return [(label, None) for label, _ in results]
    return [(label, round_half_up((Fraction(c) - best) / best * 100)) for label, c in results]


def gap_rows(results: Sequence[tuple[str, Fraction]]) -> list[dict]:
    return [
        {"label": label, "cost": str(Fraction(cost)), "gap_pct": gap}
        for (label, cost), (_, gap) in zip(results, gap_table(results))
    ]


def gap_csv(results: Sequence[tuple[str, Fraction]]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["label", "cost", "gap_pct"], lineterminator="\n")
    w.writeheader()
    for row in gap_rows(results):
        w.writerow({**row, "gap_pct": "" if row["gap_pct"] is None else row["gap_pct"]})
    return buf.getvalue()


def gap_json(results: Sequence[tuple[str, Fraction]]) -> str:
    return json.dumps(gap_rows(results), indent=2)
