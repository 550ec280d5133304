import math
from fractions import Fraction

import pytest

from pdeplan.cluster import (
    Clustering,
    cluster_bounds,
    cluster_cr,
    cluster_cru,
    cluster_cv,
    coeff_variation,
    expand,
    global_clustering,
    is_partition,
    select_groups,
    service_groups,
    singleton_clustering,
)
from pdeplan.generator import GeneratorSpec, generate
from pdeplan.lowersolve import evaluate_cpde
from pdeplan.periodic import DeviationVector, alpha_to_demand
from pdeplan.model import Commodity, DemandMatrix, Instance, Path

F = Fraction


def net(pid, served, cap, design, flow, svc):
    return Path(pid, frozenset(served), cap, F(design), F(flow), services=frozenset(svc))


def out(pid, k, cost=50):
    return Path(pid, frozenset({k}), None, F(0), F(cost), outsourcing=True)


def build(paths, rows):
    K = len(rows[0])
    return Instance(tuple(Commodity(k, "O", "D") for k in range(K)), tuple(paths),
                    DemandMatrix.from_rows(rows))


@pytest.fixture
def spill():
    """Path 1 is cheap but holds one unit, so commodity 0 spills onto path 2,
    which commodity 1 also rides. Without capacities nobody shares."""
    paths = [net(1, {0}, 1, 1, 1, {"A"}), net(2, {0, 1}, 10, 1, 5, {"B"}), net(3, {2}, 10, 1, 1, {"D"})]
    paths += [out(10 + k, k) for k in range(3)]
    return build(paths, [[2, 2, 2], [2, 2, 2]])


def test_toy_coefficient_of_variation(toy):
    assert coeff_variation(toy)[0] == pytest.approx(math.sqrt(14 / 6) / 2)
    assert coeff_variation(toy)[0] == pytest.approx(0.7638, abs=1e-4)


def test_cv_simple_series():
    inst = build([net(1, {0, 1}, 5, 1, 1, {"A"}), out(2, 0), out(3, 1)], [[0, 3], [2, 3]])
    assert coeff_variation(inst) == {0: 1.0, 1: 0.0}


def test_cv_buckets_follow_breakpoints():
    # row pair (10 - 10c, 10 + 10c) has mean 10 and coefficient of variation exactly c
    cs = [F(i, 10) for i in range(1, 11)]
    rows = [[int(10 - 10 * c) for c in cs], [int(10 + 10 * c) for c in cs]]
    paths = [net(1, set(range(10)), 100, 1, 1, {"A"})] + [out(20 + k, k) for k in range(10)]
    inst = build(paths, rows)
    assert [coeff_variation(inst)[k] for k in range(10)] == pytest.approx([float(c) for c in cs])
    c = cluster_cv(inst)
    # cuts at 0.325, 0.55, 0.775, 0.91
    assert c.clusters == ((0, 1, 2), (3, 4), (5, 6), (7, 8), (9,))
    assert c.method == "CV"
    assert [len(g) for g in cluster_cv(inst, n_c=2).clusters] == [5, 5]


def test_cv_degenerate_cases(toy):
    assert cluster_cv(toy).clusters == ((0,),)
    flat = build([net(1, {0, 1, 2}, 9, 1, 1, {"A"})] + [out(5 + k, k) for k in range(3)],
                 [[2, 4, 6], [2, 4, 6]])
    assert cluster_cv(flat).clusters == ((0, 1, 2),)
    with pytest.raises(ValueError):
        cluster_cv(toy, n_c=0)


def test_sharing_fixture_clusters(sharing4):
    assert cluster_cr(sharing4).clusters == ((0, 1, 2, 3),)
    assert cluster_cru(sharing4).clusters == ((0, 1, 2, 3),)
    assert cluster_cv(sharing4).clusters == ((0, 1, 2), (3,))


def test_disjoint_services_leave_one_remainder_cluster():
    inst = build([net(1, {0}, 5, 1, 1, {"A"}), net(2, {1}, 5, 1, 1, {"B"}), out(3, 0), out(4, 1)],
                 [[2, 2]])
    assert cluster_cr(inst).clusters == ((0, 1),)


def test_cr_and_cru_differ_when_capacity_forces_sharing(spill):
    assert cluster_cr(spill).clusters == ((0, 1), (2,))
    assert cluster_cru(spill).clusters == ((0, 1, 2),)
    assert cluster_cr(spill).method == "CR" and cluster_cru(spill).method == "CRU"


def test_toy_cru_uses_cheapest_path(toy):
    bd = evaluate_cpde(toy.uncapacitated(), [2])
    assert bd.built == (1,)
    assert cluster_cru(toy).clusters == ((0,),)


def test_select_groups_prefers_large_then_small_ids():
    groups = {0: frozenset({0, 1}), 1: frozenset({0, 1}), 2: frozenset({2, 3}),
              3: frozenset({1, 2, 3}), 4: frozenset({4})}
    assert select_groups(groups, "CR").clusters == ((1, 2, 3), (0, 4))


def test_expand_clamps_per_member(toy, sharing4):
    assert expand(global_clustering(toy), [F(3, 2)], toy).alpha == (F(3, 2),)
    g = global_clustering(sharing4)
    assert expand(g, [1], sharing4).alpha == (1, 1, 1, 1)
    dv = expand(g, [5], sharing4)
    assert dv.alpha == tuple(hi for _, hi in cluster_bounds(sharing4, singleton_clustering(sharing4)))
    with pytest.raises(ValueError):
        expand(g, [1, 1], sharing4)


def test_json_roundtrip(spill):
    c = cluster_cr(spill)
    assert Clustering.from_json(c.to_json()) == c


@pytest.mark.parametrize("seed", range(10))
def test_outputs_are_partitions(seed):
    inst = generate(GeneratorSpec(n_commodities=6, periods=5, tau=2.5, capacity_ratio=0.8), seed)
    for c in (cluster_cv(inst), cluster_cr(inst), cluster_cru(inst),
              global_clustering(inst), singleton_clustering(inst)):
        assert is_partition(c, inst), c
    y = alpha_to_demand(inst, DeviationVector.ones(inst))
    groups = service_groups(inst, evaluate_cpde(inst, y).mcnd_flow)
    first = cluster_cr(inst).clusters[0]
    largest = max(len(g) for g in groups.values())
    assert len(first) == largest or largest == 1


def test_partition_check_catches_overlap(sharing4):
    assert not is_partition(Clustering(((0, 1), (1, 2, 3)), "x"), sharing4)
    assert not is_partition(Clustering(((0, 1),), "x"), sharing4)
    assert not is_partition(Clustering(((0, 1, 2, 3), ()), "x"), sharing4)
