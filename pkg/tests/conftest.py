import numpy as np
import pytest

from dynmedian.instance import Group, Instance, generate_random


def two_site(switch_cost: float) -> Instance:
    """Two sites whose demand swaps between the days."""
    return Instance(
        locations=("a", "b"),
        horizon=2,
        fleet_size=1,
        cost=[[0, 1], [1, 0]],
        demand=[[10, 0], [0, 10]],
        open_cost=switch_cost,
        close_cost=switch_cost,
        groups=(Group("all", (0, 1), 0, 1),),
    )


def family(seed: int) -> Instance:
    """Random desk-scale instance: at most 7 sites, p <= 3, T <= 4."""
    rng = np.random.default_rng([17, seed])
    n = int(rng.integers(2, 8))
    p = int(rng.integers(1, min(3, n) + 1))
    T = int(rng.integers(1, 5))
    k = int(rng.integers(1, min(n, 3) + 1))
    return generate_random(seed, n, k, T, p)


@pytest.fixture
def tiny():
    return two_site(0.5)


@pytest.fixture
def tiny_sticky():
    return two_site(6.0)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
