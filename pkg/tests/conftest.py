import numpy as np
import pytest

from mlav.model import LaneSpec, SourceCoupling
from mlav.multilane import AvState, GridSpec, MultiLaneState, Schedule

UNIT = LaneSpec(2.0, 1.0)


def av(lane, y, u):
    return AvState(lane=lane, y=y, schedule=Schedule.constant(u))


def lane_state(*rows, avs=(), t=0.0):
    return MultiLaneState(t, np.array(rows, dtype=float), list(avs))


@pytest.fixture
def unit_lane():
    return UNIT


@pytest.fixture
def two_lanes():
    specs = [UNIT, UNIT]
    return specs, SourceCoupling(tuple(specs))


@pytest.fixture
def periodic_grid():
    return GridSpec(0.0, 4.0, 200, "periodic")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = getattr(config, "_acceptance_verdicts", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts):
        terminalreporter.write_line(verdicts[number])
