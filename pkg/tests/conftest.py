from __future__ import annotations

import numpy as np
import pytest

from closmcast.experiments import fig1_group
from closmcast.groups import generate_group
from closmcast.topology import TopologyParams, build_topology, fig1_preset, paper_preset

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fig1_topo():
    return build_topology(fig1_preset())


@pytest.fixture(scope="session")
def paper_topo():
    return build_topology(paper_preset())


@pytest.fixture
def fig1_grp():
    return fig1_group()


def random_instance(rng: np.random.Generator, max_d: int = 20):
    """Small random topology plus group, as used by the oracle checks."""
    while True:
        params = TopologyParams(
            n=int(rng.integers(2, 7)),
            m=int(rng.integers(1, 5)),
            l=int(rng.integers(1, 7)),
            s=int(rng.integers(1, 4)),
            u=int(rng.integers(1, 4)),
        )
        if params.hosts >= 2:
            break
    topo = build_topology(params)
    d = int(rng.integers(1, min(max_d, params.hosts - 1) + 1))
    grp = generate_group(topo, d, int(rng.integers(2**32)), int(rng.integers(2**16)))
    k = int(rng.integers(1, 5))
    return topo, grp, k
