"""Periodic-demand mappings and the deviation-coefficient parameterization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .model import Instance, demand_stats

MAPPINGS = ("mean", "max", "q2", "q3")

Number = Fraction | int | float


def round_half_up(x: Number) -> int:
    return math.floor(Fraction(x) + Fraction(1, 2))


def quantile(values: Sequence[Number], q: Number) -> Fraction:
    """Linear interpolation between order statistics at position (n - 1) * q."""
    if not values:
        raise ValueError("quantile of an empty sequence")
    v = sorted(Fraction(x) for x in values)
    pos = (len(v) - 1) * Fraction(q)
    lo = math.floor(pos)
    if lo >= len(v) - 1:
        return v[-1]
    return v[lo] + (pos - lo) * (v[lo + 1] - v[lo])


def mapping(inst: Instance, which: str) -> tuple[int, ...]:
    """Periodic demand from the forecast rows: max, mean, Q2 or Q3.

    Mean and quartiles are rounded up to integers.
    """
    cols = [inst.forecasts.column(k) for k in range(inst.K)]
    if which == "max":
        return tuple(max(c) for c in cols)
    if which == "mean":
        return tuple(math.ceil(Fraction(sum(c), len(c))) for c in cols)
    if which == "q2":
        return tuple(math.ceil(quantile(c, Fraction(1, 2))) for c in cols)
    if which == "q3":
        return tuple(math.ceil(quantile(c, Fraction(3, 4))) for c in cols)
    raise ValueError(f"unknown mapping {which!r}; expected one of {MAPPINGS}")


def frozen_commodities(inst: Instance) -> frozenset[int]:
    """Commodities whose forecasts are identically zero."""
    st = demand_stats(inst)
    return frozenset(k for k, m in enumerate(st.mean) if m == 0)


def alpha_bounds(inst: Instance) -> tuple[tuple[Fraction, Fraction], ...]:
    st = demand_stats(inst)
    out = []
    for mean, lo, hi in zip(st.mean, st.min, st.max):
        if mean == 0:
            out.append((Fraction(1), Fraction(1)))
        else:
            out.append((lo / mean, hi / mean))
    return tuple(out)


def scalar_bounds(inst: Instance) -> tuple[Fraction, Fraction]:
    frozen = frozen_commodities(inst)
    b = [bd for k, bd in enumerate(alpha_bounds(inst)) if k not in frozen]
    if not b:
        return Fraction(1), Fraction(1)
    return min(lo for lo, _ in b), max(hi for _, hi in b)


@dataclass(frozen=True)
class DeviationVector:
    alpha: tuple[Fraction, ...]
    bounds: tuple[tuple[Fraction, Fraction], ...]
    frozen: frozenset[int] = frozenset()

    def __post_init__(self):
        if len(self.alpha) != len(self.bounds):
            raise ValueError("alpha and bounds differ in length")
        for k, (a, (lo, hi)) in enumerate(zip(self.alpha, self.bounds)):
            if k in self.frozen:
                if a != 1:
                    raise ValueError(f"frozen commodity {k} must have alpha 1, got {a}")
            elif not lo <= a <= hi:
                raise ValueError(f"alpha[{k}] = {a} outside [{lo}, {hi}]")

    @classmethod
    def ones(cls, inst: Instance) -> "DeviationVector":
        return cls.for_instance(inst, [Fraction(1)] * inst.K)

    @classmethod
    def for_instance(cls, inst: Instance, alpha: Sequence[Number]) -> "DeviationVector":
        frozen = frozen_commodities(inst)
        a = tuple(Fraction(1) if k in frozen else Fraction(x) for k, x in enumerate(alpha))
        return cls(a, alpha_bounds(inst), frozen)

    @classmethod
    def clamped(cls, inst: Instance, alpha: Sequence[Number]) -> "DeviationVector":
        bounds = alpha_bounds(inst)
        return cls.for_instance(
            inst, [min(max(Fraction(a), lo), hi) for a, (lo, hi) in zip(alpha, bounds)]
        )


def alpha_to_demand(inst: Instance, dv: DeviationVector) -> tuple[int, ...]:
    """y_p[k] = round-half-up(alpha[k] * mean[k]); frozen commodities get 0."""
    st = demand_stats(inst)
    return tuple(
        0 if k in dv.frozen else max(0, round_half_up(a * m))
        for k, (a, m) in enumerate(zip(dv.alpha, st.mean))
    )
