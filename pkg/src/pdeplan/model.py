"""Problem instances: commodities, paths, demand matrices and their JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path as FsPath
from typing import Any, Iterable, Optional, Sequence


class InstanceFormatError(ValueError):
    """Raised when an instance document cannot be parsed or fails validation."""


@dataclass(frozen=True)
class Commodity:
    id: int
    origin: str
    destination: str
    kind: str = ""


@dataclass(frozen=True)
class Path:
    """A candidate path. ``capacity=None`` means unbounded."""

    id: int
    served: frozenset[int]
    capacity: Optional[int]
    design_cost: Fraction
    flow_cost: Fraction
    outsourcing: bool = False
    services: frozenset[str] = frozenset()

    def serves(self, k: int) -> bool:
        return k in self.served


@dataclass(frozen=True)
class DemandMatrix:
    """T x K nonnegative integer demand, rows are periods."""

    values: tuple[tuple[int, ...], ...]

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable[int]]) -> "DemandMatrix":
        return cls(tuple(tuple(int(v) for v in row) for row in rows))

    @property
    def periods(self) -> int:
        return len(self.values)

    @property
    def width(self) -> int:
        return len(self.values[0]) if self.values else 0

    def column(self, k: int) -> tuple[int, ...]:
        return tuple(row[k] for row in self.values)

    def row(self, t: int) -> tuple[int, ...]:
        return self.values[t]


@dataclass(frozen=True)
class Instance:
    commodities: tuple[Commodity, ...]
    paths: tuple[Path, ...]
    forecasts: DemandMatrix
    observed: Optional[DemandMatrix] = None
    name: str = ""

    @property
    def K(self) -> int:
        return len(self.commodities)

    @property
    def T(self) -> int:
        return self.forecasts.periods

    def path(self, pid: int) -> Path:
        return self._path_index()[pid]

    def _path_index(self) -> dict[int, Path]:
        idx = self.__dict__.get("_pidx")
        if idx is None:
            idx = {p.id: p for p in self.paths}
            object.__setattr__(self, "_pidx", idx)
        return idx

    def paths_for(self, k: int) -> list[Path]:
        return [p for p in self.paths if k in p.served]

    @property
    def network_paths(self) -> list[Path]:
        return [p for p in self.paths if not p.outsourcing]

    @property
    def outsourcing_paths(self) -> list[Path]:
        return [p for p in self.paths if p.outsourcing]

    def with_paths(self, paths: Sequence[Path]) -> "Instance":
        return replace(self, paths=tuple(paths))

    def uncapacitated(self) -> "Instance":
        """Copy with every network path capacity lifted; costs are kept."""
        return self.with_paths([replace(p, capacity=None) for p in self.paths])


@dataclass(frozen=True)
class Violation:
    entity: str  # "commodity", "path", "demand" or "instance"
    ref: Optional[int]
    message: str

    def __str__(self) -> str:
        where = self.entity if self.ref is None else f"{self.entity} {self.ref}"
        return f"{where}: {self.message}"


def validate_instance(inst: Instance) -> list[Violation]:
    """Return every violated invariant; an empty list means the instance is well formed."""
    out: list[Violation] = []
    ids = [c.id for c in inst.commodities]
    if sorted(ids) != list(range(len(ids))):
        out.append(Violation("instance", None, "commodity ids must be unique and contiguous from 0"))
    known = set(ids)

    pids = [p.id for p in inst.paths]
    if len(set(pids)) != len(pids):
        out.append(Violation("instance", None, "path ids must be unique"))

    for p in inst.paths:
        for k in sorted(p.served - known):
            out.append(Violation("path", p.id, f"serves unknown commodity {k}"))
        if p.capacity is not None and p.capacity < 0:
            out.append(Violation("path", p.id, "capacity must be nonnegative"))
        if p.design_cost < 0 or p.flow_cost < 0:
            out.append(Violation("path", p.id, "costs must be nonnegative"))
        if p.outsourcing:
            if p.design_cost != 0:
                out.append(Violation("path", p.id, "outsourcing path must have zero design cost"))
            if p.capacity is not None:
                out.append(Violation("path", p.id, "outsourcing path must have unbounded capacity"))
        elif p.capacity is None:
            out.append(Violation("path", p.id, "network path must have finite capacity"))

    for c in inst.commodities:
        serving = inst.paths_for(c.id)
        outs = [p for p in serving if p.outsourcing]
        if not outs:
            out.append(Violation("commodity", c.id, f"commodity {c.id} has no outsourcing path"))
            continue
        cheapest_out = min(p.flow_cost for p in outs)
        for p in serving:
            if not p.outsourcing and p.flow_cost >= cheapest_out:
                out.append(
                    Violation(
                        "path",
                        p.id,
                        f"flow cost must be below the outsourcing cost of commodity {c.id}",
                    )
                )

    for label, dm in (("forecasts", inst.forecasts), ("observed", inst.observed)):
        if dm is None:
            continue
        if dm.periods < 1:
            out.append(Violation("demand", None, f"{label} must have at least one period"))
        for t, row in enumerate(dm.values):
            if len(row) != inst.K:
                out.append(Violation("demand", t, f"{label} row {t} has {len(row)} entries, expected {inst.K}"))
            if any(v < 0 for v in row):
                out.append(Violation("demand", t, f"{label} row {t} has negative entries"))
    if inst.observed is not None and inst.observed.periods != inst.forecasts.periods:
        out.append(Violation("demand", None, "observed and forecasts must have the same number of periods"))
    return out


@dataclass(frozen=True)
class DemandStats:
    mean: tuple[Fraction, ...]
    min: tuple[int, ...]
    max: tuple[int, ...]


def demand_stats(inst: Instance, demands: Optional[DemandMatrix] = None) -> DemandStats:
    """Per-commodity mean (exact), min and max of the forecasts."""
    dm = inst.forecasts if demands is None else demands
    cols = [dm.column(k) for k in range(inst.K)]
    return DemandStats(
        mean=tuple(Fraction(sum(c), len(c)) for c in cols),
        min=tuple(min(c) for c in cols),
        max=tuple(max(c) for c in cols),
    )


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------

def format_cost(x: Fraction) -> str:
    """Decimal string when the value terminates, ``p/q`` otherwise."""
    x = Fraction(x)
    den = x.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{x.numerator}/{x.denominator}"
    digits = max(twos, fives)
    if digits == 0:
        return str(x.numerator)
    scaled = x * 10**digits
    sign = "-" if scaled < 0 else ""
    s = str(abs(scaled.numerator)).rjust(digits + 1, "0")
    return f"{sign}{s[:-digits]}.{s[-digits:]}"


def _cost(value: Any, where: str) -> Fraction:
    if isinstance(value, bool) or not isinstance(value, (str, int)):
        raise InstanceFormatError(f"{where}: cost must be a decimal string, got {value!r}")
    try:
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise InstanceFormatError(f"{where}: bad cost {value!r}") from exc


def _int(value: Any, where: str, *, allow_none: bool = False) -> Optional[int]:
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise InstanceFormatError(f"{where}: expected integer, got {value!r}")
    if value < 0:
        raise InstanceFormatError(f"{where}: must be nonnegative, got {value}")
    return value


def _matrix(value: Any, where: str) -> DemandMatrix:
    if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
        raise InstanceFormatError(f"{where}: expected an array of arrays")
    rows = []
    for t, row in enumerate(value):
        rows.append(tuple(_int(v, f"{where}[{t}][{j}]") for j, v in enumerate(row)))
    return DemandMatrix(tuple(rows))


def instance_from_dict(doc: dict) -> Instance:
    if not isinstance(doc, dict):
        raise InstanceFormatError("top level must be an object")
    for key in ("commodities", "paths", "forecasts"):
        if key not in doc:
            raise InstanceFormatError(f"missing top-level key {key!r}")

    commodities = []
    for i, c in enumerate(doc["commodities"]):
        where = f"commodities[{i}]"
        if not isinstance(c, dict) or "id" not in c:
            raise InstanceFormatError(f"{where}: expected object with an 'id'")
        commodities.append(
            Commodity(
                id=_int(c["id"], f"{where}.id"),
                origin=str(c.get("origin", "")),
                destination=str(c.get("destination", "")),
                kind=str(c.get("kind", "")),
            )
        )

    paths = []
    for i, p in enumerate(doc["paths"]):
        where = f"paths[{i}]"
        if not isinstance(p, dict):
            raise InstanceFormatError(f"{where}: expected object")
        try:
            served = p["commodities"]
            pid = p["id"]
        except KeyError as exc:
            raise InstanceFormatError(f"{where}: missing field {exc.args[0]!r}") from None
        paths.append(
            Path(
                id=_int(pid, f"{where}.id"),
                served=frozenset(_int(k, f"{where}.commodities") for k in served),
                capacity=_int(p.get("capacity"), f"{where}.capacity", allow_none=True),
                design_cost=_cost(p.get("design_cost", "0"), f"{where}.design_cost"),
                flow_cost=_cost(p.get("flow_cost", "0"), f"{where}.flow_cost"),
                outsourcing=bool(p.get("outsourcing", False)),
                services=frozenset(str(s) for s in p.get("services", [])),
            )
        )

    observed = doc.get("observed")
    return Instance(
        commodities=tuple(commodities),
        paths=tuple(paths),
        forecasts=_matrix(doc["forecasts"], "forecasts"),
        observed=None if observed is None else _matrix(observed, "observed"),
        name=str(doc.get("name", "")),
    )


def instance_to_dict(inst: Instance) -> dict:
    doc: dict[str, Any] = {}
    if inst.name:
        doc["name"] = inst.name
    doc["commodities"] = [
        {"id": c.id, "origin": c.origin, "destination": c.destination, "kind": c.kind}
        for c in inst.commodities
    ]
    doc["paths"] = [
        {
            "id": p.id,
            "commodities": sorted(p.served),
            "capacity": p.capacity,
            "design_cost": format_cost(p.design_cost),
            "flow_cost": format_cost(p.flow_cost),
            "outsourcing": p.outsourcing,
            "services": sorted(p.services),
        }
        for p in inst.paths
    ]
    doc["forecasts"] = [list(r) for r in inst.forecasts.values]
    if inst.observed is not None:
        doc["observed"] = [list(r) for r in inst.observed.values]
    return doc


def load_instance(text: str, *, validate: bool = True) -> Instance:
    """Parse a JSON instance document.

    Syntax errors carry the line and column; schema errors carry the field path.
    With ``validate`` set, invariant violations are raised as one error listing all of them.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    inst = instance_from_dict(doc)
    if validate:
        problems = validate_instance(inst)
        if problems:
            raise InstanceFormatError("invalid instance:\n" + "\n".join(f"  {v}" for v in problems))
    return inst


def save_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2) + "\n"


def read_instance(path: str | FsPath, *, validate: bool = True) -> Instance:
    text = FsPath(path).read_text(encoding="utf-8")
    try:
        return load_instance(text, validate=validate)
    except InstanceFormatError as exc:
        raise InstanceFormatError(f"{path}: {exc}") from exc


def write_instance(inst: Instance, path: str | FsPath) -> None:
    FsPath(path).write_text(save_instance(inst), encoding="utf-8")


def bundled(name: str) -> Instance:
    """Load a fixture shipped in ``pdeplan/data`` (e.g. ``"toy1"``)."""
    text = resources.files("pdeplan").joinpath("data").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return load_instance(text)


def toy1() -> Instance:
    return bundled("toy1")
