"""Upper-level search over deviation coefficients.

Every optimizer here works on a :class:`SearchSpace` (scalar, clustered or
full) and asks an :class:`Evaluator` for horizon costs. The evaluator caches
by rounded periodic demand, so the evaluation counts reported are counts of
distinct lower-level solves.
"""

from __future__ import annotations

import itertools
import math
import random
import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional, Protocol, Sequence

from .cluster import Clustering, cluster_bounds, global_clustering, singleton_clustering
from .lowersolve import CostBreakdown, evaluate_cpde
from .model import DemandMatrix, Instance, demand_stats
from .periodic import MAPPINGS, Number, alpha_bounds, frozen_commodities, mapping, round_half_up

Point = tuple[Fraction, ...]


def as_fraction(x: Number | str) -> Fraction:
    """Exact conversion; floats go through their shortest repr so 1.1 means 11/10."""
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


class SearchSpace:
    """Box of coefficient values, one dimension per group of tied commodities."""

    def __init__(self, inst: Instance, mode: str, clustering: Clustering):
        self.inst = inst
        self.mode = mode
        self.clustering = clustering
        self.groups: tuple[tuple[int, ...], ...] = clustering.clusters
        self.bounds: tuple[tuple[Fraction, Fraction], ...] = cluster_bounds(inst, clustering)
        self.commodity_bounds = alpha_bounds(inst)
        self.means = demand_stats(inst).mean
        self.frozen = frozen_commodities(inst)
        for lo, hi in self.bounds:
            assert lo <= hi

    @classmethod
    def scalar(cls, inst: Instance) -> "SearchSpace":
        return cls(inst, "scalar", global_clustering(inst))

    @classmethod
    def clustered(cls, inst: Instance, clustering: Clustering) -> "SearchSpace":
        return cls(inst, "clustered", clustering)

    @classmethod
    def full(cls, inst: Instance) -> "SearchSpace":
        return cls(inst, "full", singleton_clustering(inst))

    @property
    def dimension(self) -> int:
        return len(self.groups)

    def ones(self) -> Point:
        return tuple(Fraction(1) for _ in self.groups)

    def clamp(self, point: Sequence[Number]) -> Point:
        return tuple(
            min(max(as_fraction(x), lo), hi) for x, (lo, hi) in zip(point, self.bounds)
        )

    def contains(self, point: Sequence[Number]) -> bool:
        return len(point) == self.dimension and all(
            lo <= x <= hi for x, (lo, hi) in zip(point, self.bounds)
        )

    def alpha(self, point: Sequence[Number]) -> Point:
        """Per-commodity coefficients: group value clamped to each member's own bounds."""
        if len(point) != self.dimension:
            raise ValueError(f"point has {len(point)} coordinates, space has {self.dimension}")
        a = [Fraction(1)] * self.inst.K
        for g, x in zip(self.groups, point):
            x = as_fraction(x)
            for k in g:
                lo, hi = self.commodity_bounds[k]
                a[k] = min(max(x, lo), hi)
        return tuple(a)

    def demand(self, point: Sequence[Number]) -> tuple[int, ...]:
        a = self.alpha(point)
        return tuple(
            0 if k in self.frozen else max(0, round_half_up(a[k] * self.means[k]))
            for k in range(self.inst.K)
        )


class Evaluator:
    """Memoized horizon-cost oracle, safe to call from several threads.

    Each distinct periodic-demand vector is solved once and counted once.
    ``serial(y)`` gives the running count at which ``y`` was first solved.
    """

    def __init__(self, inst: Instance, demands: Optional[DemandMatrix] = None):
        self.inst = inst
        self.demands = inst.forecasts if demands is None else demands
        self.count = 0
        self.history: list[Point] = []
        self._memo: dict[tuple[int, ...], Future] = {}
        self._serial: dict[tuple[int, ...], int] = {}
        self._lock = threading.Lock()

    def breakdown(self, y_p: Sequence[int]) -> CostBreakdown:
        key = tuple(int(v) for v in y_p)
        with self._lock:
            fut = self._memo.get(key)
            owner = fut is None
            if owner:
                fut = Future()
                self._memo[key] = fut
                self.count += 1
                self._serial[key] = self.count
        if owner:
            try:
                fut.set_result(evaluate_cpde(self.inst, key, self.demands))
            except BaseException as exc:
                fut.set_exception(exc)
                raise
        return fut.result()

    def cost(self, y_p: Sequence[int]) -> Fraction:
        return self.breakdown(y_p).c_pde

    def serial(self, y_p: Sequence[int]) -> int:
        return self._serial[tuple(y_p)]

    def evaluate(self, space: SearchSpace, point: Point) -> Fraction:
        with self._lock:
            self.history.append(tuple(point))
        return self.cost(space.demand(point))

    def evaluate_many(
        self, space: SearchSpace, points: Sequence[Point], workers: int = 1
    ) -> list[Fraction]:
        if workers <= 1 or len(points) <= 1:
            return [self.evaluate(space, p) for p in points]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda p: self.evaluate(space, p), points))


@dataclass
class SearchResult:
    algorithm: str
    mode: str
    best_point: Point
    best_alpha: Point
    best_demand: tuple[int, ...]
    best_cost: Fraction
    evaluations_to_best: int
    evaluations: int
    iterations: int
    trace: list[tuple[int, Fraction]]
    seed: Optional[int] = None
    params: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "algorithm": self.algorithm,
            "mode": self.mode,
            "best_cost": str(self.best_cost),
            "best_cost_float": float(self.best_cost),
            "best_point": [str(x) for x in self.best_point],
            "best_alpha": [str(x) for x in self.best_alpha],
            "best_alpha_float": [float(x) for x in self.best_alpha],
            "best_demand": list(self.best_demand),
            "evaluations_to_best": self.evaluations_to_best,
            "evaluations": self.evaluations,
            "iterations": self.iterations,
            "trace": [[i, str(c)] for i, c in self.trace],
            "seed": self.seed,
            "params": {k: (str(v) if isinstance(v, Fraction) else v) for k, v in self.params.items()},
        }


def _result(
    algorithm: str,
    space: SearchSpace,
    ev: Evaluator,
    start: int,
    point: Point,
    cost: Fraction,
    iterations: int,
    trace: list[tuple[int, Fraction]],
    seed: Optional[int],
    params: dict[str, Any],
) -> SearchResult:
    y = space.demand(point)
    return SearchResult(
        algorithm=algorithm,
        mode=space.mode,
        best_point=tuple(point),
        best_alpha=space.alpha(point),
        best_demand=y,
        best_cost=cost,
        evaluations_to_best=max(1, ev.serial(y) - start),
        evaluations=ev.count - start,
        iterations=iterations,
        trace=trace,
        seed=seed,
        params=params,
    )


# ---------------------------------------------------------------------------
# Gaussian neighborhoods
# ---------------------------------------------------------------------------

class BoxMuller:
    """Standard normal draws from a seeded uniform stream, two per transform."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self._spare: Optional[float] = None

    def __call__(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.rng.random()  # (0, 1]
        u2 = self.rng.random()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)


def neighborhood(
    space: SearchSpace, alpha: Point, beta: Number, V: int, normal: BoxMuller
) -> list[Point]:
    """V draws from N(alpha, beta * I), each clamped into the space's bounds."""
    if beta < 0 or V < 1:
        raise ValueError("need beta >= 0 and V >= 1")
    alpha = tuple(as_fraction(a) for a in alpha)
    if beta == 0:
        return [alpha] * V
    sd = math.sqrt(float(beta))
    return [
        space.clamp([a + Fraction(sd * normal()) for a in alpha]) for _ in range(V)
    ]


def _argmin(costs: Sequence[Fraction]) -> int:
    return min(range(len(costs)), key=lambda i: (costs[i], i))


def ns(
    space: SearchSpace,
    ev: Evaluator,
    alpha0: Optional[Sequence[Number]] = None,
    beta: Number = 0.05,
    V: int = 15,
    seed: int = 0,
    workers: int = 1,
) -> SearchResult:
    """Neighborhood Search: move to the best sampled neighbor while it strictly improves."""
    start = ev.count
    normal = BoxMuller(random.Random(seed))
    cur = space.clamp(space.ones() if alpha0 is None else alpha0)
    cur_cost = ev.evaluate(space, cur)
    trace = [(0, cur_cost)]
    it = 0
    while True:
        it += 1
        nbrs = neighborhood(space, cur, beta, V, normal)
        costs = ev.evaluate_many(space, nbrs, workers)
        j = _argmin(costs)
        if costs[j] < cur_cost:
            cur, cur_cost = nbrs[j], costs[j]
            trace.append((it, cur_cost))
        else:
            trace.append((it, cur_cost))
            break
    return _result("ns", space, ev, start, cur, cur_cost, it, trace, seed,
                   {"beta": beta, "V": V})


def nsdi(
    space: SearchSpace,
    ev: Evaluator,
    alpha0: Optional[Sequence[Number]] = None,
    beta: Number = 0.05,
    V: int = 15,
    M: int = 15,
    b_minus: Number = 0.7,
    b_plus: Number = 1.3,
    v_plus: Number = 1.1,
    seed: int = 0,
    workers: int = 1,
) -> SearchResult:
    """Neighborhood Search with Diversification and Intensification.

    The current point always moves to the best neighbor; the incumbent only on
    strict improvement. Improvement shrinks the sampling variance by
    ``b_minus``; a miss grows it by ``b_plus`` and grows V to ceil(v_plus * V).
    Stops after M consecutive misses.
    """
    b_minus, b_plus, v_plus = as_fraction(b_minus), as_fraction(b_plus), as_fraction(v_plus)
    if not (0 < b_minus < 1 < b_plus) or v_plus <= 1 or M < 1:
        raise ValueError("need 0 < b_minus < 1 < b_plus, v_plus > 1 and M >= 1")
    params = {"beta": beta, "V": V, "M": M, "b_minus": b_minus, "b_plus": b_plus, "v_plus": v_plus}
    start = ev.count
    normal = BoxMuller(random.Random(seed))
    beta = as_fraction(beta)
    cur = space.clamp(space.ones() if alpha0 is None else alpha0)
    best, best_cost = cur, ev.evaluate(space, cur)
    trace = [(0, best_cost)]
    misses = 0
    it = 0
    while misses < M:
        it += 1
        nbrs = neighborhood(space, cur, beta, V, normal)
        costs = ev.evaluate_many(space, nbrs, workers)
        j = _argmin(costs)
        if costs[j] < best_cost:
            best, best_cost = nbrs[j], costs[j]
            misses = 0
            beta *= b_minus
        else:
            misses += 1
            beta *= b_plus
            V = math.ceil(v_plus * V)
        cur = nbrs[j]
        trace.append((it, best_cost))
    return _result("nsdi", space, ev, start, best, best_cost, it, trace, seed, params)


# ---------------------------------------------------------------------------
# Black-box optimizer plug-in
# ---------------------------------------------------------------------------

class BlackBoxOptimizer(Protocol):
    """Ask/tell contract for external derivative-free optimizers.

    ``ask`` returns the next batch of points or None to stop; ``tell`` reports
    their costs in the same order.
    """

    def initialize(self, dimension: int, bounds: Sequence[tuple[Fraction, Fraction]], seed: Optional[int]) -> None: ...

    def ask(self) -> Optional[list[Point]]: ...

    def tell(self, points: Sequence[Point], costs: Sequence[Fraction]) -> None: ...


def run_optimizer(
    opt: BlackBoxOptimizer,
    space: SearchSpace,
    ev: Evaluator,
    *,
    budget: Optional[int] = None,
    seed: Optional[int] = None,
    name: str = "blackbox",
    params: Optional[dict[str, Any]] = None,
) -> SearchResult:
    """Drive an ask/tell optimizer until it stops or the evaluation budget is spent."""
    start = ev.count
    opt.initialize(space.dimension, space.bounds, seed)
    best: Optional[Point] = None
    best_cost: Optional[Fraction] = None
    trace: list[tuple[int, Fraction]] = []
    it = 0
    while budget is None or ev.count - start < budget:
        batch = opt.ask()
        if not batch:
            break
        pts = [space.clamp(p) for p in batch]
        costs = [ev.evaluate(space, p) for p in pts]
        opt.tell(pts, costs)
        j = _argmin(costs)
        if best_cost is None or costs[j] < best_cost:
            best, best_cost = pts[j], costs[j]
        trace.append((it, best_cost))
        it += 1
    if best is None:
        raise RuntimeError("optimizer stopped before evaluating any point")
    return _result(name, space, ev, start, best, best_cost, it, trace, seed, dict(params or {}))


class CoordinateSearch:
    """Deterministic compass search: poll +/- step on each axis, take the first
    strict improvement, halve the step after a full failed poll."""

    def __init__(self, x0: Sequence[Number], initial_step: Number = 0.5, min_step: Number = 0.01):
        self.x0 = tuple(as_fraction(x) for x in x0)
        self.step = as_fraction(initial_step)
        self.min_step = as_fraction(min_step)
        if not self.step > self.min_step > 0:
            raise ValueError("need initial_step > min_step > 0")

    def initialize(self, dimension, bounds, seed=None) -> None:
        if len(self.x0) != dimension:
            raise ValueError("start point does not match the dimension")
        self.bounds = tuple(bounds)
        self.center: Optional[Point] = None
        self.center_cost: Optional[Fraction] = None
        self.queue: list[Point] = []

    def _clamp(self, x: Sequence[Fraction]) -> Point:
        return tuple(min(max(v, lo), hi) for v, (lo, hi) in zip(x, self.bounds))

    def _polls(self) -> list[Point]:
        out = []
        for i in range(len(self.center)):
            for sign in (1, -1):
                x = list(self.center)
                x[i] += sign * self.step
                out.append(self._clamp(x))
        return out

    def ask(self) -> Optional[list[Point]]:
        if self.center is None:
            return [self._clamp(self.x0)]
        while True:
            while self.queue:
                p = self.queue.pop(0)
                if p != self.center:
                    return [p]
            self.step /= 2
            if self.step < self.min_step:
                return None
            self.queue = self._polls()

    def tell(self, points, costs) -> None:
        if self.center is None or costs[0] < self.center_cost:
            self.center, self.center_cost = points[0], costs[0]
            self.queue = self._polls()


def direct_search(
    space: SearchSpace,
    ev: Evaluator,
    alpha0: Optional[Sequence[Number]] = None,
    initial_step: Number = 0.5,
    min_step: Number = 0.01,
    budget: Optional[int] = 1000,
) -> SearchResult:
    x0 = space.clamp(space.ones() if alpha0 is None else alpha0)
    opt = CoordinateSearch(x0, initial_step, min_step)
    return run_optimizer(
        opt, space, ev, budget=budget, name="direct",
        params={"initial_step": as_fraction(initial_step), "min_step": as_fraction(min_step),
                "budget": budget},
    )


# ---------------------------------------------------------------------------
# Fixed mappings and exhaustive enumeration
# ---------------------------------------------------------------------------

def enumerate_mappings(inst: Instance, ev: Evaluator) -> dict[str, Fraction]:
    """Horizon cost of the mean, max, Q2 and Q3 periodic demands."""
    return {m: ev.cost(mapping(inst, m)) for m in MAPPINGS}


def _dimension_choices(space: SearchSpace, d: int) -> list[Point]:
    """Distinct member demand patterns reachable along one dimension.

    Demand is piecewise constant in the coordinate; it can only change at a
    member bound or where coefficient * mean crosses a half-integer. Sampling
    every breakpoint and every midpoint between consecutive ones hits each piece.
    """
    lo, hi = space.bounds[d]
    members = space.groups[d]
    cuts = {lo, hi}
    for k in members:
        klo, khi = space.commodity_bounds[k]
        cuts |= {klo, khi}
        m = space.means[k]
        j = math.floor(lo * m - Fraction(1, 2))
        while True:
            x = (j + Fraction(1, 2)) / m
            if x > hi:
                break
            if x >= lo:
                cuts.add(x)
            j += 1
    cuts = sorted(c for c in cuts if lo <= c <= hi)
    samples = list(cuts) + [(a + b) / 2 for a, b in zip(cuts, cuts[1:])]
    seen: dict[tuple[int, ...], Fraction] = {}
    for x in sorted(samples):
        point = list(space.ones())
        point[d] = x
        y = space.demand(point)
        key = tuple(y[k] for k in members)
        seen.setdefault(key, x)
    return [(x,) for x in seen.values()]


def grid_size(space: SearchSpace) -> int:
    return math.prod(len(_dimension_choices(space, d)) for d in range(space.dimension))


def grid_optimum(space: SearchSpace, ev: Evaluator, limit: int = 10**4) -> tuple[Fraction, Point]:
    """Exact optimum over the space by enumerating every reachable demand vector."""
    choices = [_dimension_choices(space, d) for d in range(space.dimension)]
    size = math.prod(len(c) for c in choices)
    if size > limit:
        raise ValueError(f"grid has {size} demand vectors, limit is {limit}")
    best: Optional[tuple[Fraction, Point]] = None
    for combo in itertools.product(*choices):
        point = tuple(c[0] for c in combo)
        cost = ev.evaluate(space, point)
        if best is None or cost < best[0]:
            best = (cost, point)
    return best


def grid_search(space: SearchSpace, ev: Evaluator, limit: int = 10**4) -> SearchResult:
    """:func:`grid_optimum` packaged as a search result (the ``enumerate`` algorithm)."""
    start = ev.count
    trace: list[tuple[int, Fraction]] = []
    cost, point = grid_optimum(space, ev, limit)
    trace.append((0, cost))
    return _result("enumerate", space, ev, start, point, cost, 1, trace, None, {"limit": limit})
