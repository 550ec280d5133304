"""Acceptance criteria, one test each.

Every test prints a ``[criterion N] PASS|FAIL`` line; the lines are also
repeated in the pytest terminal summary. Run just this file with

    pytest tests/test_acceptance.py -v

or directly with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import random
import sys
import time
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import random_instance  # noqa: E402
from pdeplan.cli import DEFAULT_CELLS, Cell, RunConfig, bench, main  # noqa: E402
from pdeplan.cluster import (  # noqa: E402
    cluster_cr,
    cluster_cru,
    cluster_cv,
    coeff_variation,
    is_partition,
    service_groups,
)
from pdeplan.generator import GeneratorSpec, generate  # noqa: E402
from pdeplan.lowersolve import (  # noqa: E402
    Design,
    evaluate_cpde,
    oracle_flow,
    oracle_mcnd,
    solve_flow,
    solve_mcnd,
)
from pdeplan.metrics import kappa, outsourced_set, tau  # noqa: E402
from pdeplan.model import bundled, toy1  # noqa: E402
from pdeplan.periodic import DeviationVector, alpha_to_demand, mapping  # noqa: E402
from pdeplan.search import (  # noqa: E402
    Evaluator,
    SearchSpace,
    direct_search,
    grid_optimum,
    grid_size,
    ns,
    nsdi,
)

pytestmark = pytest.mark.acceptance

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str, elapsed: float, limit: float | None = None) -> None:
    timing = f"{elapsed:.2f}s" + (f" (limit {limit:g}s)" if limit else "")
    if limit is not None and elapsed >= limit:
        ok = False
        detail += "; over time limit"
    line = f"[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail} [{timing}]"
    RESULTS[n] = line
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. golden cost table on the single-commodity fixture
# ---------------------------------------------------------------------------

TABLE = [
    (["--mapping", "mean"], "Path 1, 10, 10, 240, 300, 205"),
    (["--mapping", "q2"], "Path 1, 10, 10, 240, 300, 205"),
    (["--mapping", "q3"], "Paths 1,2,3, 40, 30, 80, 320, 305"),
    (["--mapping", "max"], "Paths 1,2,3, 40, 30, 80, 320, 305"),
    (["--alpha", "1.5"], "Paths 1,2, 20, 20, 160, 280, 185"),
]


def test_criterion_1_golden_table(capsys):
    t0 = time.perf_counter()
    bad = []
    for flags, expected in TABLE:
        code = main(["solve", "--instance", "builtin:toy1", *flags])
        got = capsys.readouterr().out.strip()
        if code != 0 or got != expected:
            bad.append(f"{flags}: got {got!r}")
    elapsed = time.perf_counter() - t0
    record(1, not bad, "all 5 rows exact" if not bad else "; ".join(bad), elapsed, 1)


# ---------------------------------------------------------------------------
# 2. sharing metrics on the four-commodity, two-train fixture
# ---------------------------------------------------------------------------

def test_criterion_2_sharing_metrics():
    t0 = time.perf_counter()
    inst = bundled("sharing4")
    t, k = tau(inst), kappa(inst)
    ok = t == 3 and k == Fraction(5, 2)
    record(2, ok, f"tau={t}, kappa={k}", time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# 3. exact solvers agree with exhaustive oracles
# ---------------------------------------------------------------------------

def test_criterion_3_oracle_equivalence():
    t0 = time.perf_counter()
    mismatches = []
    n_mcnd = n_flow = 0
    for seed in range(220):
        rng = random.Random(seed)
        K = rng.randint(1, 4)
        inst = random_instance(rng, n_commodities=K, n_paths=rng.randint(1, 12), max_cap=8,
                               max_demand=8)
        y = [rng.randint(0, 12) for _ in range(K)]
        while sum(y) > 50:
            y[rng.randrange(K)] //= 2
        got, want = solve_mcnd(inst, y).objective, oracle_mcnd(inst, y)
        n_mcnd += 1
        if got != want:
            mismatches.append(f"mcnd seed {seed}: {got} != {want}")

        # flow check on a sub-instance with at most 6 network paths
        net = [p for p in inst.network_paths][:6]
        sub = inst.with_paths(net + inst.outsourcing_paths)
        design = Design.of(sub, [p.id for p in net if rng.random() < 0.7])
        yf = [min(v, 6) for v in y]
        got, want = solve_flow(sub, design, yf).cost, oracle_flow(sub, design, yf)
        n_flow += 1
        if got != want:
            mismatches.append(f"flow seed {seed}: {got} != {want}")
    detail = f"{n_mcnd} MCND and {n_flow} flow cases"
    if mismatches:
        detail += ", mismatches: " + "; ".join(mismatches[:5])
    record(3, not mismatches, detail, time.perf_counter() - t0, 120)


# ---------------------------------------------------------------------------
# 4. search soundness
# ---------------------------------------------------------------------------

def _search_instances():
    spec = GeneratorSpec(n_commodities=4, periods=6, tau=2.0, capacity_ratio=0.8)
    return [toy1()] + [generate(spec, seed) for seed in range(20)]


def _trailing_misses(trace):
    costs = [c for _, c in trace]
    run = longest = 0
    for prev, cur in zip(costs, costs[1:]):
        run = run + 1 if cur == prev else 0
        longest = max(longest, run)
    return run, longest


def test_criterion_4_search_soundness():
    t0 = time.perf_counter()
    problems = []
    runs = 0
    M = 15
    for inst in _search_instances():
        for space in (SearchSpace.scalar(inst), SearchSpace.full(inst)):
            base = Evaluator(inst).evaluate(space, space.ones())
            algos = {
                "ns": lambda ev, s=space: ns(s, ev, seed=11),
                "nsdi": lambda ev, s=space: nsdi(s, ev, seed=11, M=M),
                "direct": lambda ev, s=space: direct_search(s, ev),
            }
            for name, run in algos.items():
                ev = Evaluator(inst)
                res = run(ev)
                runs += 1
                tag = f"{inst.name}/{space.mode}/{name}"
                if res.best_cost > base:
                    problems.append(f"{tag}: {res.best_cost} > start {base}")
                if not all(space.contains(p) for p in ev.history):
                    problems.append(f"{tag}: evaluated point out of bounds")
                if res.best_cost != evaluate_cpde(inst, res.best_demand).c_pde:
                    problems.append(f"{tag}: best cost not reproducible")
                if name == "nsdi":
                    tail, longest = _trailing_misses(res.trace)
                    if tail != M or longest > M:
                        problems.append(f"{tag}: stopped after {tail} misses (longest {longest})")
                if run(Evaluator(inst)).to_dict() != res.to_dict():
                    problems.append(f"{tag}: not deterministic")
    detail = f"{runs} runs on toy1 + 20 generated instances"
    if problems:
        detail += ", problems: " + "; ".join(problems[:5])
    record(4, not problems, detail, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# 5. restricting the space can only hurt
# ---------------------------------------------------------------------------

def test_criterion_5_restriction_ordering():
    t0 = time.perf_counter()
    problems = []
    checked = 0
    spec = GeneratorSpec(n_commodities=3, periods=4, tau=1.5, capacity_ratio=0.8, mean_demand=(2, 6))
    for seed in range(12):
        inst = generate(spec, seed)
        full = SearchSpace.full(inst)
        if grid_size(full) > 10**4:
            continue
        ev = Evaluator(inst)
        f = grid_optimum(full, ev)[0]
        s = grid_optimum(SearchSpace.scalar(inst), ev)[0]
        for method in (cluster_cv, cluster_cr, cluster_cru):
            c = grid_optimum(SearchSpace.clustered(inst, method(inst)), ev)[0]
            checked += 1
            if not f <= c <= s:
                problems.append(f"seed {seed} {method.__name__}: {f}, {c}, {s}")
    toy = toy1()
    scalar_best = grid_optimum(SearchSpace.scalar(toy), Evaluator(toy))[0]
    direct = direct_search(SearchSpace.scalar(toy), Evaluator(toy)).best_cost
    if not direct == scalar_best == 280:
        problems.append(f"toy1 direct {direct}, grid {scalar_best}")
    ok = not problems and checked >= 10
    detail = f"{checked} full <= clustered <= scalar checks; toy1 direct = grid = {direct}"
    if problems:
        detail += ", problems: " + "; ".join(problems[:5])
    record(5, ok, detail, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# 6. clustering contracts
# ---------------------------------------------------------------------------

def _interp(values, q):
    v = sorted(Fraction(x) for x in values)
    pos = (len(v) - 1) * q
    i = int(pos)
    return v[-1] if i >= len(v) - 1 else v[i] + (pos - i) * (v[i + 1] - v[i])


def _expected_cv_buckets(inst):
    cv = coeff_variation(inst)
    cuts = [_interp(cv.values(), q) for q in (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(9, 10))]
    buckets = {}
    for k, s in cv.items():
        # C1: s <= Q25, C2: (Q25, Q50], ..., C5: s > Q90
        b = next((i for i, c in enumerate(cuts) if Fraction(s) <= c), len(cuts))
        buckets.setdefault(b, []).append(k)
    return tuple(tuple(sorted(buckets[b])) for b in sorted(buckets))


def test_criterion_6_clustering_contracts():
    t0 = time.perf_counter()
    problems = []
    for seed in range(50):
        spec = GeneratorSpec(n_commodities=3 + seed % 6, periods=6, tau=1.0 + (seed % 4) / 2,
                             capacity_ratio=(0.5, 0.8, 1.2, 3.0)[seed % 4], cv_max=0.8)
        inst = generate(spec, seed)
        cv, cr, cru = cluster_cv(inst), cluster_cr(inst), cluster_cru(inst)
        for c in (cv, cr, cru):
            if not is_partition(c, inst):
                problems.append(f"seed {seed}: {c.method} not a partition {c.clusters}")
        if cv.clusters != _expected_cv_buckets(inst):
            problems.append(f"seed {seed}: CV {cv.clusters} != {_expected_cv_buckets(inst)}")
        y = alpha_to_demand(inst, DeviationVector.ones(inst))
        groups = service_groups(inst, evaluate_cpde(inst, y).mcnd_flow)
        largest = max(len(g) for g in groups.values())
        if largest > 1 and len(cr.clusters[0]) != largest:
            problems.append(f"seed {seed}: CR first cluster size {len(cr.clusters[0])} < {largest}")
    detail = "50 instances: CV/CR/CRU partitions, CV breakpoints, CR first cluster maximal"
    if problems:
        detail += ", problems: " + "; ".join(problems[:5])
    record(6, not problems, detail, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# 7. qualitative benchmark phenomenon
# ---------------------------------------------------------------------------

LOOSE_SEEDS = range(6)
TIGHT_SEEDS = range(10)


def test_criterion_7_benchmark_phenomenon():
    t0 = time.perf_counter()
    problems = []
    cfg = RunConfig(command="bench")
    cells = [Cell.parse(c) for c in DEFAULT_CELLS]

    loose_ok = 0
    for seed in LOOSE_SEEDS:
        inst = generate(GeneratorSpec(preset="loose"), seed)
        if outsourced_set(inst):
            problems.append(f"loose seed {seed}: outsourcing at mean demand")
            continue
        ev = Evaluator(inst)
        grid = grid_optimum(SearchSpace.full(inst), ev)[0]
        mx = ev.cost(mapping(inst, "max"))
        if mx != grid:
            problems.append(f"loose seed {seed}: max {mx} != grid optimum {grid}")
        else:
            loose_ok += 1

    tight_ok = qualifying = 0
    for seed in TIGHT_SEEDS:
        inst = generate(GeneratorSpec(preset="tight"), seed)
        if 4 * len(outsourced_set(inst)) < inst.K:
            continue  # not capacity-tight; outside the criterion's premise
        qualifying += 1
        rows = {r["label"]: r for r in bench(inst, cells, cfg)}
        search_gap = min(r["gap_pct"] for label, r in rows.items() if ":" in label)
        if rows["max"]["gap_pct"] > search_gap:
            tight_ok += 1
        else:
            problems.append(f"tight seed {seed}: max gap {rows['max']['gap_pct']}% "
                            f"<= search gap {search_gap}%")
    if qualifying < len(TIGHT_SEEDS) // 2:
        problems.append(f"only {qualifying} tight seeds met |K_L| >= K/4")
    detail = (f"loose: max = grid optimum on {loose_ok}/{len(LOOSE_SEEDS)} seeds; "
              f"tight: max gap > best search gap on {tight_ok}/{qualifying} capacity-tight seeds")
    if problems:
        detail += ", problems: " + "; ".join(problems[:5])
    record(7, not problems, detail, time.perf_counter() - t0, 300)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(pytest.main([__file__, "-q", "-s"]))
