import numpy as np
import pytest

from ipn.equilibrium import ModelParams
from ipn.measure import AtomicMeasure, discretize

ACCEPTANCE_LINES: list[str] = []


def dirac_model(sigma=1.0, c=0.5, spikes=()):
    return ModelParams(sigma, c, AtomicMeasure.dirac(0.0), tuple(spikes))


# three multi-atom bulk laws used throughout the theory tests
MULTI_ATOM = [
    ModelParams(0.3, 0.5, AtomicMeasure.from_atoms([[1, 0.5], [3, 0.5]])),
    ModelParams(0.5, 0.3, AtomicMeasure.from_atoms([[0.5, 0.3], [4, 0.7]])),
    ModelParams(0.4, 0.8, discretize("uniform", 8, a=1, b=2)),
]


@pytest.fixture(params=range(len(MULTI_ATOM)), ids=["two-atoms", "skewed-two-atoms", "uniform8"])
def multi_atom(request):
    return MULTI_ATOM[request.param]


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
