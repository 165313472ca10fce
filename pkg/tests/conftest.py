import numpy as np
import pytest

from bpnet.graph import build_clustered_grid, grid_node, wireline_rate_model
from bpnet.traffic import ArrivalSpec, Distribution

PAIRS = [((1, 3), (2, 5)), ((2, 3), (2, 7)), ((2, 2), (1, 6)), ((3, 4), (2, 7)),
         ((1, 1), (1, 7)), ((4, 3), (5, 4)), ((4, 6), (6, 6)), ((5, 3), (5, 6))]


def clustered_graph(seed=0):
    g = build_clustered_grid(4, 4, 2, 2, seed=seed)
    return g.with_commodities([grid_node(*d) for _, d in PAIRS])


def clustered_arrivals(rate):
    return ArrivalSpec(tuple((grid_node(*s), c, Distribution.poisson(rate)) for c, (s, _) in enumerate(PAIRS)))


@pytest.fixture(scope="session")
def grid64():
    g = clustered_graph()
    return g, wireline_rate_model(g, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line per acceptance criterion and return the flag."""
    def record(criterion: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
