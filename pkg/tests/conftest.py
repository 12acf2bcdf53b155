import math

import numpy as np
import pytest
from hypothesis import settings

from pseudolidar.scan_geometry import CameraCalib, Scan

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def make_scan(ranges, angle_min=-math.pi, inc=None, max_range=30.0, frame_id=0):
    ranges = np.asarray(ranges, dtype=float)
    if inc is None:
        inc = 2 * math.pi / len(ranges)
    return Scan(frame_id, ranges, angle_min, inc, max_range)


def scan_from_points(xy, n_beams=1091, max_range=30.0):
    """Scan whose beams hit the given points (nearest beam per point)."""
    inc = 2 * math.pi / n_beams
    ranges = np.full(n_beams, max_range)
    for x, y in np.asarray(xy, dtype=float).reshape(-1, 2):
        k = int(round((math.atan2(y, x) + math.pi) / inc)) % n_beams
        ranges[k] = min(ranges[k], math.hypot(x, y))
    return Scan(0, ranges, -math.pi, inc, max_range)


@pytest.fixture
def calib():
    return CameraCalib.forward_facing()


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    line = f"{name} {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
