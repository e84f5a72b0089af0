import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def proto_factory():
    from securedl.dealer import Dealer
    from securedl.mpc import Protocol
    from securedl.transport import Transport

    def make(n=3, seed=0, budget=None):
        return Protocol(Dealer(n, seed, budget), Transport(n))

    return make


def pytest_terminal_summary(terminalreporter):
    """Print one line per acceptance criterion that ran."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        terminalreporter.write_line(lines[k])
