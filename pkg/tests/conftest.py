from __future__ import annotations

import pytest

from phytocolumn.config import PERIOD, preset
from phytocolumn.model import (
    AffineDeath,
    ExpCosineEvolution,
    GrowthFunction,
    LightSchedule,
    ModelParameters,
)

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


def make_params(**overrides) -> ModelParameters:
    """Fixed-column parameters with g(I0) = 0.25 and d = 0.2 unless overridden."""
    base = dict(
        D=1e-3, alpha=0.0, k0=0.0, k1=0.0,
        growth=GrowthFunction(3.0, 2.0), light=LightSchedule(0.1),
        death=AffineDeath(0.2, 0.0), evolution=ExpCosineEvolution(0.0, 3.0),
        L0=1.0, T=PERIOD,
    )
    base.update(overrides)
    return ModelParameters(**base)


@pytest.fixture
def scalar_params():
    """Spatially constant coefficients: the PDE reduces to a scalar ODE."""
    return make_params()


@pytest.fixture(params=["example-4.1a", "example-4.1b", "example-4.2a", "example-4.2b",
                        "example-4.3a", "example-4.3b"])
def any_preset(request):
    return preset(request.param).params


@pytest.fixture
def ex41a():
    return preset("example-4.1a").params


@pytest.fixture
def ex41b():
    return preset("example-4.1b").params


def rel(a, b):
    return abs(a - b) / abs(b)

