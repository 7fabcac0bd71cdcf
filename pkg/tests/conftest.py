"""
Shared fixtures for the engine, CLI and API suites
"""
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT))
sys.path.insert(0, str(ROOT / "backend"))

from src import catalog
from src.branches import BackgroundSolution, Branch1D
from src.expressions import JetConvention


@pytest.fixture(scope="session")
def conv():
    return JetConvention(n=1, max_order=4)


@pytest.fixture(scope="session")
def toy_branch(conv):
    return Branch1D.from_text("u*u_x", name="toy", conv=conv)


@pytest.fixture(scope="session")
def toy_seed(conv):
    return BackgroundSolution("x/sqrt(-2*t)", conv=conv)


@pytest.fixture(scope="session")
def toy_entry():
    return catalog.get("toy")


@pytest.fixture(scope="session")
def gam3_entry():
    return catalog.get("gam3")
