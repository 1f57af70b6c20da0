import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from otcompress.graph import Graph

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"


def random_graph(rng, n, extra=None, cost_range=(0.1, 2.0), directed_frac=0.0):
    """Random connected graph: a random spanning tree plus ``extra`` chords."""
    edges = {}
    for v in range(1, n):
        edges[(int(rng.integers(0, v)), v)] = None
    if extra is None:
        extra = int(rng.integers(0, n + 1))
    for _ in range(extra):
        if n < 2:
            break
        u, v = sorted(int(x) for x in rng.choice(n, 2, replace=False))
        edges[(u, v)] = None
    out = []
    for u, v in edges:
        c = float(rng.uniform(*cost_range))
        d = bool(rng.random() < directed_frac)
        if d and rng.random() < 0.5:
            u, v = v, u
        out.append((u, v, c, d))
    return Graph.from_edges(n, out)


def random_simplex(rng, n, sparse=False):
    x = rng.dirichlet(np.ones(n))
    if sparse and n > 1:
        x[rng.random(n) < 0.4] = 0.0
        if x.sum() == 0:
            x[int(rng.integers(0, n))] = 1.0
        x /= x.sum()
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path3():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])
