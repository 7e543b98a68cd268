import numpy as np
import pytest

from srbfem.geometry import WellSegment, build_box_mesh, build_line_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def vertical_well():
    return WellSegment((0.5, 0.5, 0.25), (0.5, 0.5, 0.75), 1e-2)


@pytest.fixture
def slanted_well():
    return WellSegment((0.3, 0.35, 0.3), (0.65, 0.6, 0.7), 5e-3)


@pytest.fixture
def mesh4():
    return build_box_mesh(4)


@pytest.fixture
def line_mesh(vertical_well):
    return build_line_mesh(vertical_well, 8)


# one verdict line per acceptance criterion, shown at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
