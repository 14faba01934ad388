import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from lmapf.grid import parse_map
from lmapf.maps import load_map

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance checklist")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_map(body: str, extra_header: str = "octile"):
    rows = [r.strip() for r in body.strip().splitlines()]
    h, w = len(rows), len(rows[0])
    return parse_map(f"type {extra_header}\nheight {h}\nwidth {w}\nmap\n" + "\n".join(rows))


@pytest.fixture(scope="session")
def empty8():
    return load_map("empty-8-8")


@pytest.fixture(scope="session")
def empty16():
    return load_map("empty-16-16")


@pytest.fixture(scope="session")
def random32():
    return load_map("random-32-32")


@pytest.fixture(scope="session")
def warehouse():
    return load_map("warehouse-33-57")


@pytest.fixture(scope="session")
def sortation():
    return load_map("sortation-33-57")


def random_positive_weights(grid, rng, with_wait=True, lo=0.1, hi=5.0):
    """Random strictly positive tensor over the valid-edge mask."""
    from lmapf.guidance import GuidanceGraph
    g = GuidanceGraph(grid, with_wait=with_wait)
    w = np.full(g.mask.shape, np.inf)
    w[g.mask] = rng.uniform(lo, hi, size=g.edge_count)
    return w


def random_usage_field(grid, rng, scale=6.0):
    """Random usage counts on valid move edges only; zero elsewhere."""
    from lmapf.guidance import GuidanceGraph
    g = GuidanceGraph(grid, with_wait=False)
    u = np.zeros(g.mask.shape)
    u[g.mask] = np.floor(rng.uniform(0.0, scale, size=g.edge_count))
    return u
