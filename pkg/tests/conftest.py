import json
import pathlib
import time

import pytest

from etabsim import SimConfig, builtin_demo, run

GOLDEN_PATH = pathlib.Path(__file__).with_name("golden_demo.json")


@pytest.fixture(scope="session")
def golden():
    """Frozen reference values for the demo closed-loop run."""
    with open(GOLDEN_PATH) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def demo_system():
    return builtin_demo()


@pytest.fixture(scope="session")
def demo_run(demo_system):
    """The full demo closed-loop run shared by the acceptance tests.

    Returns (result, wall_seconds, spec, truth, gains, simcfg).
    """
    spec, truth, gains = demo_system
    simcfg = SimConfig()
    t0 = time.perf_counter()
    result = run(spec, truth, gains, simcfg)
    wall = time.perf_counter() - t0
    return result, wall, spec, truth, gains, simcfg
