"""Exact lower-level solves: fixed-design flows, MCND by branch and bound, wMCND,
and the horizon cost obtained by running the two in sequence.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, NamedTuple, Optional, Sequence

from .mincostflow import MinCostFlow
from .model import DemandMatrix, Instance


@dataclass(frozen=True)
class Design:
    """Set of open path ids. Outsourcing paths are always included."""

    open: frozenset[int]

    @classmethod
    def of(cls, inst: Instance, network_ids: Iterable[int]) -> "Design":
        return cls(frozenset(network_ids) | {p.id for p in inst.outsourcing_paths})

    @classmethod
    def all_open(cls, inst: Instance) -> "Design":
        return cls(frozenset(p.id for p in inst.paths))

    def is_open(self, pid: int) -> bool:
        return pid in self.open

    def built(self, inst: Instance) -> tuple[int, ...]:
        """Open network (non-outsourcing) path ids, ascending."""
        return tuple(sorted(p.id for p in inst.network_paths if p.id in self.open))

    def design_cost(self, inst: Instance) -> Fraction:
        return sum((inst.path(pid).design_cost for pid in self.open), Fraction(0))


@dataclass(frozen=True)
class FlowSolution:
    demand: tuple[int, ...]
    flow: dict[tuple[int, int], int]  # (path id, commodity) -> units, positive entries only
    flow_cost: Fraction
    out_cost: Fraction

    @property
    def cost(self) -> Fraction:
        return self.flow_cost + self.out_cost

    def x(self, pid: int, k: int) -> int:
        return self.flow.get((pid, k), 0)

    def path_load(self, pid: int) -> int:
        return sum(v for (p, _), v in self.flow.items() if p == pid)

    def by_path(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for (p, _), v in self.flow.items():
            out[p] = out.get(p, 0) + v
        return out


@dataclass(frozen=True)
class CostBreakdown:
    y_p: tuple[int, ...]
    design: Design
    built: tuple[int, ...]
    design_cost: Fraction
    mcnd_flow_cost: Fraction
    wmcnd_cost: Fraction
    c_pde: Fraction
    per_period: tuple[Fraction, ...]
    mcnd_flow: FlowSolution
    period_flows: tuple[FlowSolution, ...] = field(repr=False, default=())

    @property
    def periods(self) -> int:
        return len(self.per_period)

    @property
    def mcnd_objective(self) -> Fraction:
        return self.design_cost + self.mcnd_flow_cost


class McndSolution(NamedTuple):
    design: Design
    flow: FlowSolution
    objective: Fraction


class _Scaled:
    """Integer costs sharing one denominator, so the flow solver never sees fractions."""

    def __init__(self, inst: Instance):
        self.scale = 1
        for p in inst.paths:
            for c in (p.design_cost, p.flow_cost):
                self.scale = self.scale * c.denominator // math.gcd(self.scale, c.denominator)
        self.design = {p.id: int(p.design_cost * self.scale) for p in inst.paths}
        self.flow = {p.id: int(p.flow_cost * self.scale) for p in inst.paths}

    def unscale(self, v: int) -> Fraction:
        return Fraction(v, self.scale)


def _scaled(inst: Instance) -> _Scaled:
    sc = inst.__dict__.get("_scaled")
    if sc is None:
        sc = _Scaled(inst)
        object.__setattr__(inst, "_scaled", sc)
    return sc


class _RawFlow(NamedTuple):
    cost: int  # scaled
    out_cost: int  # scaled
    flow: dict[tuple[int, int], int]
    used: frozenset[int]


def _check_demand(inst: Instance, demand: Sequence[int]) -> tuple[int, ...]:
    d = tuple(int(v) for v in demand)
    if len(d) != inst.K:
        raise ValueError(f"demand has {len(d)} entries, instance has {inst.K} commodities")
    if any(v < 0 for v in d):
        raise ValueError("demand must be nonnegative")
    return d


def _raw_flow(inst: Instance, open_ids: frozenset[int], demand: tuple[int, ...]) -> _RawFlow:
    total = sum(demand)
    if total == 0:
        return _RawFlow(0, 0, {}, frozenset())
    sc = _scaled(inst)
    ks = [k for k, v in enumerate(demand) if v > 0]
    paths = [p for p in inst.paths if p.id in open_ids and any(demand[k] > 0 for k in p.served)]
    knode = {k: 1 + i for i, k in enumerate(ks)}
    pbase = 1 + len(ks)
    sink = pbase + len(paths)
    g = MinCostFlow(sink + 1)
    for k in ks:
        g.add_edge(0, knode[k], demand[k], 0)
    arcs = []
    for j, p in enumerate(paths):
        for k in sorted(p.served):
            if demand[k] > 0:
                arcs.append((p, k, g.add_edge(knode[k], pbase + j, demand[k], sc.flow[p.id])))
        cap = total if p.capacity is None else min(p.capacity, total)
        g.add_edge(pbase + j, sink, cap, 0)
    sent, cost = g.solve(0, sink, total)
    if sent < total:
        missing = [k for k in ks if sum(g.flow_on(e) for p, kk, e in arcs if kk == k) < demand[k]]
        raise RuntimeError(f"internal error: no open path can carry commodities {missing}")
    flow = {}
    out = 0
    for p, k, e in arcs:
        f = g.flow_on(e)
        if f:
            flow[(p.id, k)] = f
            if p.outsourcing:
                out += f * sc.flow[p.id]
    return _RawFlow(cost, out, flow, frozenset(pid for pid, _ in flow))


def _to_solution(inst: Instance, demand: tuple[int, ...], raw: _RawFlow) -> FlowSolution:
    sc = _scaled(inst)
    return FlowSolution(
        demand=demand,
        flow=dict(raw.flow),
        flow_cost=sc.unscale(raw.cost - raw.out_cost),
        out_cost=sc.unscale(raw.out_cost),
    )


def solve_flow(inst: Instance, design: Design, demand: Sequence[int]) -> FlowSolution:
    """Minimum-cost integral routing of ``demand`` over the open paths of ``design``."""
    d = _check_demand(inst, demand)
    missing = [p.id for p in inst.outsourcing_paths if p.id not in design.open]
    if missing:
        raise ValueError(f"design must open every outsourcing path (closed: {missing})")
    return _to_solution(inst, d, _raw_flow(inst, design.open, d))


def _lex_floor(forced: frozenset[int], undecided: Sequence[int]) -> tuple[int, ...]:
    # smallest sorted open-set reachable below a node: adding ids under max(forced) only helps
    if not forced:
        return ()
    top = max(forced)
    return tuple(sorted(forced | {u for u in undecided if u < top}))


def solve_mcnd(inst: Instance, y_p: Sequence[int]) -> McndSolution:
    """Exact MCND for one periodic demand vector by depth-first branch and bound.

    Paths are branched in order of decreasing design cost. A node's bound is the
    design cost of the paths forced open plus the flow cost with every undecided
    path open. Equal-cost optima resolve to the lexicographically smallest set of
    open network path ids.
    """
    demand = _check_demand(inst, y_p)
    sc = _scaled(inst)
    outs = frozenset(p.id for p in inst.outsourcing_paths)
    cand = [p for p in inst.network_paths if any(demand[k] > 0 for k in p.served)]
    order = [p.id for p in sorted(cand, key=lambda p: (-p.design_cost, p.id))]
    dc = sc.design

    best: dict = {}

    def consider(cost: int, opened: frozenset[int], raw: _RawFlow) -> None:
        key = tuple(sorted(opened))
        if not best or cost < best["cost"] or (cost == best["cost"] and key < best["key"]):
            best.update(cost=cost, key=key, opened=opened, raw=raw)

    def node(i: int, forced: frozenset[int], fdesign: int, raw: _RawFlow) -> None:
        bound = fdesign + raw.cost
        rest = order[i:]
        if bound > best["cost"]:
            return
        if bound == best["cost"] and _lex_floor(forced, rest) >= best["key"]:
            return
        used = [pid for pid in rest if pid in raw.used]
        consider(bound + sum(dc[u] for u in used), forced | frozenset(used), raw)
        if i == len(order):
            return
        pid = order[i]
        if pid in raw.used:
            closed = _raw_flow(inst, outs | forced | frozenset(order[i + 1:]), demand)
        else:
            closed = raw
        node(i + 1, forced, fdesign, closed)
        node(i + 1, forced | {pid}, fdesign + dc[pid], raw)

    everything = frozenset(order)
    root = _raw_flow(inst, outs | everything, demand)
    consider(sum(dc[p] for p in order) + root.cost, everything, root)
    node(0, frozenset(), 0, root)

    design = Design(best["opened"] | outs)
    flow = _to_solution(inst, demand, best["raw"])
    return McndSolution(design, flow, sc.unscale(best["cost"]))


def solve_wmcnd(
    inst: Instance, design: Design, demands: DemandMatrix
) -> tuple[list[FlowSolution], Fraction]:
    """Route each period's demand independently over a fixed design."""
    flows = [solve_flow(inst, design, demands.row(t)) for t in range(demands.periods)]
    return flows, sum((f.cost for f in flows), Fraction(0))


def evaluate_cpde(
    inst: Instance,
    y_p: Sequence[int],
    demands: Optional[DemandMatrix] = None,
    *,
    mcnd: Optional[McndSolution] = None,
) -> CostBreakdown:
    """Horizon cost of planning with periodic demand ``y_p``.

    The design comes from MCND at ``y_p``; the horizon flows from wMCND on
    ``demands`` (forecasts by default, pass the observed matrix for actual cost).
    """
    dm = inst.forecasts if demands is None else demands
    y = _check_demand(inst, y_p)
    if mcnd is None:
        mcnd = solve_mcnd(inst, y)
    design, flow, _ = mcnd
    flows, wcost = solve_wmcnd(inst, design, dm)
    dcost = design.design_cost(inst)
    return CostBreakdown(
        y_p=y,
        design=design,
        built=design.built(inst),
        design_cost=dcost,
        mcnd_flow_cost=flow.cost,
        wmcnd_cost=wcost,
        c_pde=dm.periods * dcost + wcost,
        per_period=tuple(f.cost for f in flows),
        mcnd_flow=flow,
        period_flows=tuple(flows),
    )


# ---------------------------------------------------------------------------
# Verification oracles (exhaustive; test use only)
# ---------------------------------------------------------------------------

ORACLE_MAX_PATHS = 12
ORACLE_MAX_DEMAND = 50


def oracle_mcnd(inst: Instance, y_p: Sequence[int]) -> Fraction:
    """Enumerate every open/closed pattern of the network paths."""
    demand = _check_demand(inst, y_p)
    net = [p.id for p in inst.network_paths]
    if len(net) > ORACLE_MAX_PATHS or sum(demand) > ORACLE_MAX_DEMAND:
        raise ValueError(
            f"oracle limited to {ORACLE_MAX_PATHS} network paths and total demand "
            f"{ORACLE_MAX_DEMAND} (got {len(net)}, {sum(demand)})"
        )
    best = None
    for mask in itertools.product((False, True), repeat=len(net)):
        design = Design.of(inst, (pid for pid, on in zip(net, mask) if on))
        cost = design.design_cost(inst) + solve_flow(inst, design, demand).cost
        if best is None or cost < best:
            best = cost
    return best


def _compositions(n: int, parts: int) -> Iterable[tuple[int, ...]]:
    if parts == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, parts - 1):
            yield (first,) + rest


def oracle_flow(inst: Instance, design: Design, demand: Sequence[int]) -> Fraction:
    """Enumerate every integral split of each commodity's demand over its open paths.

    Exhaustive depth-first search over commodities. Pruning only drops branches
    that provably cannot beat the incumbent: a capacity-free lower bound on the
    commodities still to route, and revisits of a (commodity, path loads) state
    at no lower cost.
    """
    d = _check_demand(inst, demand)
    per_k = []
    for k, v in enumerate(d):
        paths = [p for p in inst.paths_for(k) if p.id in design.open]
        if v and not paths:
            raise ValueError(f"commodity {k} has no open path")
        splits = list(_compositions(v, len(paths))) if paths else [()]
        splits.sort(key=lambda sp: sum(x * p.flow_cost for p, x in zip(paths, sp)))
        per_k.append((paths, splits))
    cheapest = [min((p.flow_cost for p in paths), default=Fraction(0)) * v
                for (paths, _), v in zip(per_k, d)]
    rest_bound = [sum(cheapest[k:], Fraction(0)) for k in range(len(per_k) + 1)]
    ids = sorted({p.id for paths, _ in per_k for p in paths})

    best: list[Optional[Fraction]] = [None]
    seen: dict[tuple, Fraction] = {}

    def rec(k: int, load: dict[int, int], cost: Fraction) -> None:
        if best[0] is not None and cost + rest_bound[k] >= best[0]:
            return
        if k == len(per_k):
            best[0] = cost
            return
        state = (k, tuple(load.get(i, 0) for i in ids))
        if state in seen and seen[state] <= cost:
            return
        seen[state] = cost
        paths, splits = per_k[k]
        for split in splits:
            ok = True
            add = Fraction(0)
            for p, x in zip(paths, split):
                if x and p.capacity is not None and load.get(p.id, 0) + x > p.capacity:
                    ok = False
                    break
                add += x * p.flow_cost
            if not ok:
                continue
            for p, x in zip(paths, split):
                load[p.id] = load.get(p.id, 0) + x
            rec(k + 1, load, cost + add)
            for p, x in zip(paths, split):
                load[p.id] -= x

    rec(0, {}, Fraction(0))
    return best[0]
