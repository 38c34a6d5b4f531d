import numpy as np
import pytest

from perchsim.geometry import CameraIntrinsics, PerchingTarget


@pytest.fixture
def intr():
    return CameraIntrinsics()


@pytest.fixture
def target():
    return PerchingTarget()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES as ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
