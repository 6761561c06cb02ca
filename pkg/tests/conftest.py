import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from neigad.graph import SparseGraph

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_graph(rng: np.random.Generator, n: int, p: float) -> SparseGraph:
    upper = np.triu(rng.random((n, n)) < p, k=1)
    i, j = np.nonzero(upper)
    return SparseGraph.from_edges(n, i, j)


@st.composite
def graphs(draw, min_n=1, max_n=24):
    n = draw(st.integers(min_n, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), max_size=3 * n) if pairs else st.just([]))
    src = [a for a, _ in chosen]
    dst = [b for _, b in chosen]
    return SparseGraph.from_edges(n, src, dst)


@pytest.fixture
def k2():
    return SparseGraph.from_edges(2, [0], [1])


@pytest.fixture
def k3():
    return SparseGraph.from_edges(3, [0, 1, 2], [1, 2, 0])


@pytest.fixture
def p3():
    return SparseGraph.from_edges(3, [0, 1], [1, 2])


@pytest.fixture
def star():
    return SparseGraph.from_edges(4, [0, 0, 0], [1, 2, 3])


_CRITERIA = []


@pytest.fixture
def criterion(capsys):
    """Record a PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
