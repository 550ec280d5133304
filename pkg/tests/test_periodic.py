from dataclasses import replace
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdeplan.model import Commodity, DemandMatrix
from pdeplan.periodic import (
    DeviationVector,
    alpha_bounds,
    alpha_to_demand,
    frozen_commodities,
    mapping,
    quantile,
    round_half_up,
    scalar_bounds,
)


def with_forecasts(inst, rows):
    k = len(rows[0])
    comms = tuple(Commodity(i, "O", "D") for i in range(k))
    paths = [replace(p, served=frozenset(range(k))) for p in inst.paths if not p.outsourcing]
    outs = [replace(inst.path(4), id=10 + i, served=frozenset({i})) for i in range(k)]
    return replace(inst, commodities=comms, paths=tuple(paths + outs),
                   forecasts=DemandMatrix.from_rows(rows), observed=None)


@pytest.mark.parametrize("x, expected", [(Fraction(5, 2), 3), (Fraction(3, 2), 2), (Fraction(1, 2), 1),
                                         (Fraction(49, 100), 0), (2, 2), (Fraction(-1, 2), 0)])
def test_round_half_up(x, expected):
    assert round_half_up(x) == expected


def test_quantile_interpolates():
    v = [4, 2, 1, 0, 1, 4]
    assert quantile(v, Fraction(1, 2)) == Fraction(3, 2)
    assert quantile(v, Fraction(3, 4)) == Fraction(7, 2)
    assert quantile(v, 0) == 0 and quantile(v, 1) == 4
    assert quantile([7], Fraction(1, 3)) == 7
    with pytest.raises(ValueError):
        quantile([], Fraction(1, 2))


def test_toy_mappings(toy):
    assert {m: mapping(toy, m) for m in ("mean", "max", "q2", "q3")} == {
        "mean": (2,), "max": (4,), "q2": (2,), "q3": (4,),
    }
    with pytest.raises(ValueError, match="unknown mapping"):
        mapping(toy, "median")


def test_constant_series_maps_to_itself(toy):
    inst = with_forecasts(toy, [[3], [3], [3], [3]])
    assert {mapping(inst, m) for m in ("mean", "max", "q2", "q3")} == {(3,)}
    assert alpha_bounds(inst) == ((1, 1),)


def test_toy_bounds_and_demand(toy):
    assert alpha_bounds(toy) == ((0, 2),)
    assert scalar_bounds(toy) == (0, 2)
    assert alpha_to_demand(toy, DeviationVector.for_instance(toy, [Fraction(3, 2)])) == (3,)
    assert alpha_to_demand(toy, DeviationVector.for_instance(toy, [0])) == (0,)
    assert alpha_to_demand(toy, DeviationVector.ones(toy)) == (2,)


def test_scalar_bounds_compose(toy):
    # means 5 and 2.5; bounds (0.5, 1.2) and (0.8, 3)
    inst = with_forecasts(toy, [[3, 2], [6, 2], [6, 2], [5, 2], [5, 2], [5, 5]])
    assert alpha_bounds(inst) == ((Fraction(3, 5), Fraction(6, 5)), (Fraction(4, 5), 2))
    assert scalar_bounds(inst) == (Fraction(3, 5), 2)


def test_zero_series_is_frozen(toy):
    inst = with_forecasts(toy, [[0, 1], [0, 3]])
    assert frozen_commodities(inst) == {0}
    assert alpha_bounds(inst)[0] == (1, 1)
    dv = DeviationVector.for_instance(inst, [5, 1])
    assert dv.alpha[0] == 1
    assert alpha_to_demand(inst, dv) == (0, 2)
    all_zero = with_forecasts(toy, [[0], [0]])
    assert scalar_bounds(all_zero) == (1, 1)


def test_out_of_bounds_rejected(toy):
    with pytest.raises(ValueError, match="outside"):
        DeviationVector.for_instance(toy, [3])
    assert DeviationVector.clamped(toy, [3]).alpha == (2,)


@given(st.lists(st.integers(0, 20), min_size=1, max_size=12))
def test_bounds_bracket_one_and_reach_extremes(col):
    from pdeplan.model import toy1

    inst = with_forecasts(toy1(), [[v] for v in col])
    lo, hi = alpha_bounds(inst)[0]
    assert lo <= 1 <= hi
    if any(col):
        assert alpha_to_demand(inst, DeviationVector.for_instance(inst, [hi])) == (max(col),)
        assert alpha_to_demand(inst, DeviationVector.for_instance(inst, [lo])) == (min(col),)
    for q in ("q2", "q3"):
        assert min(col) <= mapping(inst, q)[0] <= max(col)
