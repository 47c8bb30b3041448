import sys

import numpy as np
import pytest

from voidmap.synth import corridor_scene, generate, static_room_scene


@pytest.fixture(scope="session")
def small_room():
    spec = static_room_scene(scans=4, size=(5.0, 4.0, 2.5), azimuth_count=180, elevation_count=32)
    return spec, generate(spec)


@pytest.fixture(scope="session")
def corridor():
    spec = corridor_scene(scans=10)
    return spec, generate(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = sorted(getattr(mod, "RESULTS", []), key=lambda l: l.split("criterion ")[1])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
