import numpy as np
import pytest

from dfodt.core import GridSpec, OpticalConfig

# 7 um polystyrene bead in oil-matched medium, matched NA 1.2
BEAD_OPTICS = OpticalConfig(wavelength_vacuum=0.532, n_medium=1.574, na_condenser=1.2, na_objective=1.2)
WATER_OPTICS = OpticalConfig(wavelength_vacuum=0.532, n_medium=1.337, na_condenser=1.2, na_objective=1.2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid():
    return GridSpec.cube(32, 0.2)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
