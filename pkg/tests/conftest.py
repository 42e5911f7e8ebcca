import numpy as np
import pytest

from snapcs.geometry import Geometry, VideoVolume


@pytest.fixture
def default_geometry():
    """The default capture layout on a small frame."""
    return Geometry(32, 24, 16)


def random_volume(geometry, seed):
    rng = np.random.default_rng(seed)
    pixels = rng.random((geometry.temporal_len, geometry.frame_height,
                         geometry.frame_width))
    return VideoVolume(pixels, geometry)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per attempted acceptance criterion."""
    import sys

    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.ATTEMPTED:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acc.CRITERIA):
        if n in acc.RESULTS:
            terminalreporter.write_line(f"ACCEPTANCE {n}: PASS - {acc.RESULTS[n]}")
        elif n in acc.ATTEMPTED:
            terminalreporter.write_line(f"ACCEPTANCE {n}: FAIL - {acc.CRITERIA[n]}")
        else:
            terminalreporter.write_line(f"ACCEPTANCE {n}: NOT RUN - {acc.CRITERIA[n]}")
