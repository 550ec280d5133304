"""``pdeplan`` command line: generate, solve, search, cluster, bench, report.

Instances are JSON files; ``builtin:<name>`` loads a bundled fixture such as
``builtin:toy1``. Results go to stdout, or to files under ``--out DIR``.
Exit status is 0 on success and 2 on bad input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path as FsPath
from typing import Any, Optional, Sequence

from .cluster import Clustering, cluster_cr, cluster_cru, cluster_cv
from .generator import PRESETS, GeneratorError, GeneratorSpec, generate
from .lowersolve import CostBreakdown, evaluate_cpde, solve_mcnd
from .metrics import gap_table, profile
from .model import Instance, InstanceFormatError, bundled, format_cost, read_instance, save_instance
from .periodic import MAPPINGS, DeviationVector, alpha_to_demand, mapping
from .search import (
    Evaluator,
    SearchResult,
    SearchSpace,
    as_fraction,
    direct_search,
    grid_search,
    ns,
    nsdi,
)

MODES = ("scalar", "clustered", "full")
CLUSTERINGS = ("cv", "cr", "cru")
ALGOS = ("ns", "nsdi", "direct", "enumerate")
SEARCH_PRESETS = {
    "default": {"V": 15, "beta": Fraction(1, 20), "M": 15},
    "large": {"V": 10, "beta": Fraction(1, 50), "M": 7},
}
DEFAULT_CELLS = ("mean", "max", "q2", "q3", "scalar:nsdi", "scalar:direct", "full:nsdi", "full:direct")


class UsageError(ValueError):
    """Bad command-line input that passed argparse (bad cell names, bounds...)."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    command: str
    instance: Optional[str] = None
    mode: str = "scalar"
    clustering: str = "cv"
    n_c: int = 5
    algo: str = "nsdi"
    V: int = 15
    beta: Fraction = Fraction(1, 20)
    M: int = 15
    b_minus: Fraction = Fraction(7, 10)
    b_plus: Fraction = Fraction(13, 10)
    v_plus: Fraction = Fraction(11, 10)
    initial_step: Fraction = Fraction(1, 2)
    min_step: Fraction = Fraction(1, 100)
    budget: Optional[int] = 1000
    grid_limit: int = 10**4
    workers: int = 1
    seed: int = 0
    out: Optional[str] = None
    extra: dict[str, Any] = field(default_factory=dict)

    def check(self) -> None:
        if self.V < 1:
            raise UsageError("--V must be at least 1")
        if self.beta < 0:
            raise UsageError("--beta must be nonnegative")
        if self.M < 1:
            raise UsageError("--M must be at least 1")
        if not 0 < self.b_minus < 1 < self.b_plus:
            raise UsageError("need 0 < --b-minus < 1 < --b-plus")
        if self.v_plus <= 1:
            raise UsageError("--v-plus must exceed 1")
        if not self.initial_step > self.min_step > 0:
            raise UsageError("need --initial-step > --min-step > 0")
        if self.budget is not None and self.budget < 1:
            raise UsageError("--budget must be at least 1")
        if self.n_c < 1:
            raise UsageError("--n-c must be at least 1")

    @classmethod
    def from_args(cls, ns_: argparse.Namespace) -> "RunConfig":
        cfg = cls(command=ns_.command)
        preset = SEARCH_PRESETS[getattr(ns_, "search_preset", None) or "default"]
        for key, value in preset.items():
            setattr(cfg, key, value)
        for name in ("instance", "mode", "clustering", "n_c", "algo", "V", "beta", "M", "b_minus",
                     "b_plus", "v_plus", "initial_step", "min_step", "budget", "grid_limit",
                     "workers", "seed", "out"):
            value = getattr(ns_, name, None)
            if value is not None:
                setattr(cfg, name, value)
        if getattr(ns_, "budget", None) == 0:
            cfg.budget = None
        cfg.check()
        return cfg


def load(ref: str) -> Instance:
    if ref.startswith("builtin:"):
        return bundled(ref.split(":", 1)[1])
    return read_instance(ref)


# ---------------------------------------------------------------------------
# Building blocks shared by the subcommands
# ---------------------------------------------------------------------------

def make_clustering(inst: Instance, method: str, n_c: int = 5) -> Clustering:
    if method == "cv":
        return cluster_cv(inst, n_c)
    if method == "cr":
        return cluster_cr(inst)
    if method == "cru":
        return cluster_cru(inst)
    raise UsageError(f"unknown clustering {method!r}")


def make_space(inst: Instance, mode: str, clustering: str = "cv", n_c: int = 5) -> SearchSpace:
    if mode == "scalar":
        return SearchSpace.scalar(inst)
    if mode == "full":
        return SearchSpace.full(inst)
    if mode == "clustered":
        return SearchSpace.clustered(inst, make_clustering(inst, clustering, n_c))
    raise UsageError(f"unknown mode {mode!r}")


def run_search(inst: Instance, cfg: RunConfig, ev: Optional[Evaluator] = None) -> SearchResult:
    space = make_space(inst, cfg.mode, cfg.clustering, cfg.n_c)
    ev = ev or Evaluator(inst)
    alpha0 = cfg.extra.get("alpha0")
    if cfg.algo == "ns":
        return ns(space, ev, alpha0, beta=cfg.beta, V=cfg.V, seed=cfg.seed, workers=cfg.workers)
    if cfg.algo == "nsdi":
        return nsdi(space, ev, alpha0, beta=cfg.beta, V=cfg.V, M=cfg.M, b_minus=cfg.b_minus,
                    b_plus=cfg.b_plus, v_plus=cfg.v_plus, seed=cfg.seed, workers=cfg.workers)
    if cfg.algo == "direct":
        return direct_search(space, ev, alpha0, cfg.initial_step, cfg.min_step, cfg.budget)
    if cfg.algo == "enumerate":
        return grid_search(space, ev, cfg.grid_limit)
    raise UsageError(f"unknown algorithm {cfg.algo!r}")


def paths_label(built: Sequence[int]) -> str:
    if not built:
        return "No paths"
    ids = ",".join(str(p) for p in built)
    return f"Path {ids}" if len(built) == 1 else f"Paths {ids}"


def solve_row(bd: CostBreakdown, actual: Optional[CostBreakdown]) -> list[str]:
    row = [paths_label(bd.built), format_cost(bd.design_cost), format_cost(bd.mcnd_flow_cost),
           format_cost(bd.wmcnd_cost), format_cost(bd.c_pde)]
    if actual is not None:
        row.append(format_cost(actual.c_pde))
    return row


def solve_demand(inst: Instance, alpha: Optional[str], which: Optional[str]) -> tuple[tuple[int, ...], Optional[list[Fraction]]]:
    """Periodic demand from ``--mapping`` or ``--alpha``.

    One alpha value acts like a scalar-mode point (clamped per commodity);
    a comma list gives every commodity its own value, which must lie in bounds.
    """
    if which is not None:
        return mapping(inst, which), None
    values = [as_fraction(v) for v in (alpha or "1").split(",")]
    if len(values) == 1:
        space = SearchSpace.scalar(inst)
        a = list(space.alpha([values[0]] * space.dimension)) if space.dimension else [Fraction(1)] * inst.K
        return space.demand([values[0]] * space.dimension), a
    if len(values) != inst.K:
        raise UsageError(f"--alpha needs 1 or {inst.K} values, got {len(values)}")
    dv = DeviationVector.for_instance(inst, values)
    return alpha_to_demand(inst, dv), list(dv.alpha)


def solve_report(inst: Instance, y: tuple[int, ...], *, actual: Optional[bool] = None) -> dict[str, Any]:
    """The plan cost columns for one periodic demand; ``actual=True`` insists on observed data."""
    if actual and inst.observed is None:
        raise UsageError("actual cost requested but the instance has no observed demand")
    mcnd = solve_mcnd(inst, y)
    bd = evaluate_cpde(inst, y, mcnd=mcnd)
    act = None
    if inst.observed is not None and actual is not False:
        act = evaluate_cpde(inst, y, inst.observed, mcnd=mcnd)
    return {
        "breakdown": bd,
        "actual": act,
        "row": solve_row(bd, act),
        "doc": {
            "instance": inst.name,
            "y_p": list(y),
            "built": list(bd.built),
            "design_cost": format_cost(bd.design_cost),
            "mcnd_flow_cost": format_cost(bd.mcnd_flow_cost),
            "wmcnd_cost": format_cost(bd.wmcnd_cost),
            "c_pde": format_cost(bd.c_pde),
            "c_pde_act": None if act is None else format_cost(act.c_pde),
            "per_period": [format_cost(c) for c in bd.per_period],
            "mcnd_flow": [[p, k, x] for (p, k), x in sorted(bd.mcnd_flow.flow.items())],
        },
    }


SOLVE_HEADER = ["paths_built", "c_design", "c_flow_mcnd", "c_wmcnd", "c_pde", "c_pde_act"]


def _csv(rows: Sequence[Sequence[Any]], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(cfg: RunConfig, name: str, text: str, stdout: bool = True) -> None:
    if cfg.out:
        out = FsPath(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")
    elif stdout:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# ---------------------------------------------------------------------------
# Benchmark grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    """One benchmark column: a fixed mapping, or ``space:algo`` (space is scalar, full, cv, cr or cru)."""

    label: str
    mapping: Optional[str] = None
    mode: str = "scalar"
    clustering: str = "cv"
    algo: str = "nsdi"

    @classmethod
    def parse(cls, label: str) -> "Cell":
        if label in MAPPINGS:
            return cls(label, mapping=label)
        space, sep, algo = label.partition(":")
        if not sep or algo not in ALGOS:
            raise UsageError(f"bad bench cell {label!r}; use a mapping or space:algo")
        if space in ("scalar", "full"):
            return cls(label, mode=space, algo=algo)
        if space in CLUSTERINGS:
            return cls(label, mode="clustered", clustering=space, algo=algo)
        raise UsageError(f"bad bench cell {label!r}; unknown space {space!r}")


def run_cell(inst: Instance, cell: Cell, cfg: RunConfig) -> dict[str, Any]:
    """Evaluate one cell with its own evaluator; returns a plain, picklable record."""
    ev = Evaluator(inst)
    if cell.mapping is not None:
        y = mapping(inst, cell.mapping)
        cost = ev.cost(y)
        return {"label": cell.label, "cost": cost, "evaluations_to_best": 1, "evaluations": 1,
                "y_p": list(y), "alpha": None}
    sub = RunConfig(**{**cfg.__dict__, "mode": cell.mode, "clustering": cell.clustering,
                       "algo": cell.algo, "workers": 1})
    res = run_search(inst, sub, ev)
    return {"label": cell.label, "cost": res.best_cost, "evaluations_to_best": res.evaluations_to_best,
            "evaluations": res.evaluations, "y_p": list(res.best_demand),
            "alpha": [str(a) for a in res.best_alpha]}


def _run_cell_packed(args: tuple[Instance, Cell, RunConfig]) -> dict[str, Any]:
    return run_cell(*args)


def bench(inst: Instance, cells: Sequence[Cell], cfg: RunConfig, jobs: int = 1) -> list[dict[str, Any]]:
    """Run every cell (in parallel when ``jobs`` > 1) and attach gap-to-best percentages."""
    if len(cells) < 2:
        raise UsageError("bench needs at least two cells")
    tasks = [(inst, c, cfg) for c in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_cell_packed, tasks))
    else:
        records = [_run_cell_packed(t) for t in tasks]
    gaps = gap_table([(r["label"], r["cost"]) for r in records])
    for r, (_, g) in zip(records, gaps):
        r["gap_pct"] = g
    return records


def bench_csv(records: Sequence[dict[str, Any]]) -> str:
    return _csv(
        [[r["label"], format_cost(r["cost"]), "" if r["gap_pct"] is None else r["gap_pct"],
          r["evaluations_to_best"], r["evaluations"]] for r in records],
        ["label", "cost", "gap_pct", "evaluations_to_best", "evaluations"],
    )


def _records_json(records: Sequence[dict[str, Any]]) -> list[dict[str, Any]]:
    return [{**r, "cost": format_cost(r["cost"])} for r in records]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args: argparse.Namespace, cfg: RunConfig) -> int:
    if args.spec:
        doc = json.loads(FsPath(args.spec).read_text(encoding="utf-8"))
        spec = GeneratorSpec.from_dict(doc)
    else:
        spec = GeneratorSpec()
    if args.preset:
        spec = GeneratorSpec(**{**spec.__dict__, "preset": args.preset})
    overrides = {k: getattr(args, k) for k in ("n_commodities", "periods", "paths_per_commodity",
                                               "tau", "capacity_ratio", "out_cost")
                 if getattr(args, k) is not None}
    if overrides:
        if args.preset:
            raise UsageError("field overrides cannot be combined with --preset")
        spec = GeneratorSpec(**{**spec.__dict__, **overrides})
    inst = generate(spec, cfg.seed)
    _emit(cfg, f"{inst.name}.json", save_instance(inst))
    return 0


def cmd_solve(args: argparse.Namespace, cfg: RunConfig) -> int:
    inst = load(cfg.instance)
    y, alpha = solve_demand(inst, args.alpha, args.mapping)
    rep = solve_report(inst, y, actual=args.actual)
    doc = {**rep["doc"], "alpha": None if alpha is None else [str(a) for a in alpha],
           "mapping": args.mapping}
    if cfg.out:
        _emit(cfg, "solve.json", json.dumps(doc, indent=2))
        _emit(cfg, "solve.csv", _csv([rep["row"]], SOLVE_HEADER[: len(rep["row"])]))
    elif args.format == "json":
        _emit(cfg, "", json.dumps(doc, indent=2))
    elif args.format == "csv":
        _emit(cfg, "", _csv([rep["row"]], SOLVE_HEADER[: len(rep["row"])]))
    else:
        _emit(cfg, "", ", ".join(rep["row"]))
    return 0


def cmd_search(args: argparse.Namespace, cfg: RunConfig) -> int:
    inst = load(cfg.instance)
    if args.alpha0:
        cfg.extra["alpha0"] = [as_fraction(v) for v in args.alpha0.split(",")]
    res = run_search(inst, cfg)
    doc = {"instance": inst.name, "clustering": cfg.clustering if cfg.mode == "clustered" else None,
           **res.to_dict()}
    if cfg.algo in ("ns", "nsdi"):
        doc["seed"] = cfg.seed
    _emit(cfg, f"search-{cfg.mode}-{cfg.algo}-{cfg.seed}.json", json.dumps(doc, indent=2))
    return 0


def cmd_cluster(args: argparse.Namespace, cfg: RunConfig) -> int:
    inst = load(cfg.instance)
    c = make_clustering(inst, cfg.clustering, cfg.n_c)
    doc = {"instance": inst.name, "method": c.method, "clusters": [list(g) for g in c.clusters]}
    _emit(cfg, f"cluster-{cfg.clustering}.json", json.dumps(doc, indent=2))
    return 0


def cmd_bench(args: argparse.Namespace, cfg: RunConfig) -> int:
    inst = load(cfg.instance)
    labels = args.cells.split(",") if args.cells else list(DEFAULT_CELLS)
    cells = [Cell.parse(s.strip()) for s in labels if s.strip()]
    records = bench(inst, cells, cfg, jobs=args.jobs)
    if cfg.out:
        _emit(cfg, "bench.csv", bench_csv(records))
        _emit(cfg, "bench.json", json.dumps(
            {"instance": inst.name, "seed": cfg.seed, "cells": _records_json(records)}, indent=2))
    else:
        _emit(cfg, "", bench_csv(records))
    return 0


def _result_label(doc: dict[str, Any], path: str) -> str:
    if "label" in doc:
        return str(doc["label"])
    if "algorithm" in doc:
        space = doc.get("clustering") or doc.get("mode", "")
        return f"{space}:{doc['algorithm']}"
    if doc.get("mapping"):
        return str(doc["mapping"])
    return FsPath(path).stem


def _result_cost(doc: dict[str, Any]) -> Fraction:
    for key in ("best_cost", "c_pde", "cost"):
        if key in doc:
            return Fraction(doc[key])
    raise UsageError("result document has no cost field")


def cmd_report(args: argparse.Namespace, cfg: RunConfig) -> int:
    if not cfg.instance and not args.results:
        raise UsageError("report needs --instance and/or --results")
    doc: dict[str, Any] = {}
    if cfg.instance:
        doc["profile"] = profile(load(cfg.instance)).to_dict()
        doc["instance"] = load(cfg.instance).name
    if args.results:
        rows = []
        for path in args.results:
            data = json.loads(FsPath(path).read_text(encoding="utf-8"))
            items = data["cells"] if isinstance(data, dict) and "cells" in data else [data]
            for item in items:
                rows.append({"label": _result_label(item, path), "cost": _result_cost(item),
                             "evaluations_to_best": item.get("evaluations_to_best", 1),
                             "evaluations": item.get("evaluations", 1)})
        gaps = gap_table([(r["label"], r["cost"]) for r in rows])
        for r, (_, g) in zip(rows, gaps):
            r["gap_pct"] = g
        doc["gaps"] = _records_json(rows)
        if cfg.out:
            _emit(cfg, "report.csv", bench_csv(rows))
    _emit(cfg, "report.json", json.dumps(doc, indent=2))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _frac(text: str) -> Fraction:
    try:
        return as_fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def _common(p: argparse.ArgumentParser, instance: bool = True) -> None:
    if instance:
        p.add_argument("--instance", required=True, help="instance JSON path or builtin:<name>")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", metavar="DIR", help="write result files here instead of stdout")


def _search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=MODES, default="scalar")
    p.add_argument("--clustering", choices=CLUSTERINGS, default="cv")
    p.add_argument("--n-c", dest="n_c", type=int, default=None, help="CV bucket count (default 5)")
    p.add_argument("--preset", dest="search_preset", choices=sorted(SEARCH_PRESETS),
                   help="parameter set; 'large' means V=10, beta=0.02, M=7")
    p.add_argument("--V", type=int, default=None, help="neighbors per iteration")
    p.add_argument("--beta", type=_frac, default=None, help="neighborhood variance")
    p.add_argument("--M", type=int, default=None, help="NSDI: iterations without improvement")
    p.add_argument("--b-minus", dest="b_minus", type=_frac, default=None)
    p.add_argument("--b-plus", dest="b_plus", type=_frac, default=None)
    p.add_argument("--v-plus", dest="v_plus", type=_frac, default=None)
    p.add_argument("--initial-step", dest="initial_step", type=_frac, default=None)
    p.add_argument("--min-step", dest="min_step", type=_frac, default=None)
    p.add_argument("--budget", type=int, default=None,
                   help="direct search: distinct evaluations allowed (0 = unlimited)")
    p.add_argument("--grid-limit", dest="grid_limit", type=int, default=None)
    p.add_argument("--workers", type=int, default=None, help="threads per neighborhood")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdeplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic instance")
    _common(g, instance=False)
    g.add_argument("--preset", choices=["toy1", *sorted(PRESETS)])
    g.add_argument("--spec", help="JSON file with generator fields")
    g.add_argument("--K", dest="n_commodities", type=int)
    g.add_argument("--T", dest="periods", type=int)
    g.add_argument("--paths-per-commodity", dest="paths_per_commodity", type=int)
    g.add_argument("--tau", type=float)
    g.add_argument("--capacity-ratio", dest="capacity_ratio", type=float)
    g.add_argument("--out-cost", dest="out_cost", type=int)

    s = sub.add_parser("solve", help="plan cost for one periodic demand")
    _common(s)
    pick = s.add_mutually_exclusive_group()
    pick.add_argument("--alpha", help="one coefficient, or one per commodity, comma separated")
    pick.add_argument("--mapping", choices=MAPPINGS)
    act = s.add_mutually_exclusive_group()
    act.add_argument("--actual", dest="actual", action="store_true", default=None,
                     help="require the cost on observed demand")
    act.add_argument("--no-actual", dest="actual", action="store_false")
    s.add_argument("--format", choices=("text", "json", "csv"), default="text")

    r = sub.add_parser("search", help="search deviation coefficients")
    _common(r)
    r.add_argument("--algo", choices=ALGOS, default="nsdi")
    r.add_argument("--alpha0", help="start point, one value per search dimension")
    _search_flags(r)

    c = sub.add_parser("cluster", help="cluster commodities")
    _common(c)
    c.add_argument("--clustering", choices=CLUSTERINGS, default="cv")
    c.add_argument("--n-c", dest="n_c", type=int, default=None)

    b = sub.add_parser("bench", help="run a grid of mappings and searches")
    _common(b)
    b.add_argument("--cells", help=f"comma list (default {','.join(DEFAULT_CELLS)})")
    b.add_argument("--jobs", type=int, default=1, help="cells run in parallel processes")
    _search_flags(b)

    rp = sub.add_parser("report", help="instance profile and gap tables")
    _common(rp, instance=False)
    rp.add_argument("--instance", help="instance JSON path or builtin:<name>")
    rp.add_argument("--results", nargs="+", help="search/solve/bench JSON documents")
    return parser


COMMANDS = {
    "gen": cmd_gen,
    "solve": cmd_solve,
    "search": cmd_search,
    "cluster": cmd_cluster,
    "bench": cmd_bench,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
        return COMMANDS[args.command](args, cfg)
    except (InstanceFormatError, GeneratorError, UsageError, ValueError, OSError) as exc:
        print(f"pdeplan: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
