import numpy as np
import pytest

from leaderselect import Topology, gen_geometric


def random_topology(rng, n, density=0.5, weight_range=(0.1, 2.0), symmetric=False, connected=True):
    """Random directed topology; optionally resampled until strongly connected."""
    from leaderselect import is_strongly_connected

    for _ in range(1000):
        adj = rng.random((n, n)) < density
        np.fill_diagonal(adj, False)
        w = rng.uniform(*weight_range, size=(n, n))
        if symmetric:
            adj = adj | adj.T
            w = np.triu(w, 1)
            w = w + w.T
        topo = Topology(adj, w * adj)
        if not connected or is_strongly_connected(topo):
            return topo
    raise RuntimeError("no connected sample")


def small_geometric(rng, n, symmetric=False):
    # dense enough that small instances connect quickly
    return gen_geometric(n, 1000.0, 500.0, (0.0, 50.0), rng, symmetric=symmetric)


def star(n, center=0, w=1.0):
    edges = {}
    for v in range(n):
        if v != center:
            edges[(center, v)] = w
            edges[(v, center)] = w
    return Topology.from_edges(n, edges)


def path(n, w=1.0):
    edges = {}
    for v in range(n - 1):
        edges[(v, v + 1)] = w
        edges[(v + 1, v)] = w
    return Topology.from_edges(n, edges)


def two_node():
    return Topology.from_edges(2, {(0, 1): 1.0, (1, 0): 1.0})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}
ACCEPTANCE_COUNT = 13


def pytest_terminal_summary(terminalreporter):
    ran = [r for r in terminalreporter.stats.get("passed", []) + terminalreporter.stats.get("failed", [])
           if "test_acceptance" in r.nodeid]
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, ACCEPTANCE_COUNT + 1):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: FAIL  (not evaluated: error or deselected)")
