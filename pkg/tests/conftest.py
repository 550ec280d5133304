import random
from fractions import Fraction

import pytest

from pdeplan.model import Commodity, DemandMatrix, Instance, Path, bundled, toy1, validate_instance


@pytest.fixture
def toy():
    return toy1()


@pytest.fixture
def sharing4():
    return bundled("sharing4")


def random_instance(
    rng: random.Random,
    n_commodities: int = 3,
    n_paths: int = 5,
    periods: int = 4,
    max_cap: int = 6,
    max_demand: int = 6,
    fractional: bool = True,
) -> Instance:
    """Arbitrary small instance: each network path serves a random nonempty subset.

    Costs are sometimes non-integral so the exact arithmetic gets exercised.
    """
    K = n_commodities
    out_cost = Fraction(rng.randint(30, 60))
    paths = []
    for pid in range(n_paths):
        served = frozenset(k for k in range(K) if rng.random() < 0.5) or frozenset({rng.randrange(K)})
        design = Fraction(rng.randint(0, 40))
        flow = Fraction(rng.randint(1, 25))
        if fractional and rng.random() < 0.3:
            design += Fraction(rng.randint(1, 3), rng.choice((2, 3, 4)))
            flow += Fraction(1, rng.choice((2, 3, 5)))
        paths.append(
            Path(
                id=pid + 1,
                served=served,
                capacity=rng.randint(0, max_cap),
                design_cost=design,
                flow_cost=flow,
                services=frozenset({f"s{rng.randrange(max(1, n_paths // 2))}"}),
            )
        )
    for k in range(K):
        paths.append(
            Path(
                id=n_paths + k + 1,
                served=frozenset({k}),
                capacity=None,
                design_cost=Fraction(0),
                flow_cost=out_cost + rng.randint(0, 5),
                outsourcing=True,
            )
        )
    rows = [[rng.randint(0, max_demand) for _ in range(K)] for _ in range(periods)]
    inst = Instance(
        commodities=tuple(Commodity(k, f"O{k}", f"D{k}") for k in range(K)),
        paths=tuple(paths),
        forecasts=DemandMatrix.from_rows(rows),
        name="random",
    )
    assert validate_instance(inst) == []
    return inst


@pytest.fixture
def make_random():
    return random_instance


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance criterion lines after the run, even when output was captured."""
    module = __import__("sys").modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
