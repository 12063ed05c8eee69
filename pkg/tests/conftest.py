"""Shared fixtures and helpers for the consensuslab test suite."""

from __future__ import annotations

from collections import deque

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from consensuslab import (
    Graph,
    build_laplacian,
    generate_erdos_renyi,
    generate_random_regular,
)

settings.register_profile(
    "consensuslab",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("consensuslab")


def bfs_component_count(graph: Graph) -> int:
    """Count connected components by breadth-first search (test oracle)."""
    adjacency: list[list[int]] = [[] for _ in range(graph.node_count)]
    for u, v in graph.edges:
        adjacency[u].append(v)
        adjacency[v].append(u)
    seen = [False] * graph.node_count
    components = 0
    for start in range(graph.node_count):
        if seen[start]:
            continue
        components += 1
        queue = deque([start])
        seen[start] = True
        while queue:
            node = queue.popleft()
            for nbr in adjacency[node]:
                if not seen[nbr]:
                    seen[nbr] = True
                    queue.append(nbr)
    return components


def bfs_connected(graph: Graph) -> bool:
    return bfs_component_count(graph) == 1


def random_connected_graph(gen: np.random.Generator, max_nodes: int = 50) -> Graph:
    """Draw a connected graph: a random spanning tree plus random extra edges."""
    n = int(gen.integers(2, max_nodes + 1))
    edges = set()
    order = gen.permutation(n)
    for k in range(1, n):
        u = int(order[k])
        v = int(order[int(gen.integers(0, k))])
        edges.add((min(u, v), max(u, v)))
    extra = int(gen.integers(0, n))
    for _ in range(extra):
        u, v = (int(z) for z in gen.integers(0, n, size=2))
        if u != v:
            edges.add((min(u, v), max(u, v)))
    return Graph(n, tuple(sorted(edges)))


@pytest.fixture(scope="session")
def er_graph():
    """The 100-node, 500-edge random benchmark network."""
    return generate_erdos_renyi(100, 500, 7)


@pytest.fixture(scope="session")
def er_laplacian(er_graph):
    return build_laplacian(er_graph)


@pytest.fixture(scope="session")
def reg_graph():
    """The 230-node degree-6 regular benchmark network."""
    return generate_random_regular(230, 6, 3)


@pytest.fixture(scope="session")
def reg_laplacian(reg_graph):
    return build_laplacian(reg_graph)


# ---------------------------------------------------------------------------
# Acceptance-check reporting: each check in test_acceptance.py records one
# line here; the terminal summary prints them all, pass or fail.
# ---------------------------------------------------------------------------

_ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, name: str, ok: bool, detail: str) -> None:
    verdict = "PASS" if ok else "FAIL"
    _ACCEPTANCE_LINES[number] = f"ACCEPTANCE {number} [{verdict}] {name}: {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance checks")
    for number in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(_ACCEPTANCE_LINES[number])
