import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def two_state_hmm():
    from inversefilter.model import HMMModel, QuantizedPolicyChannel

    return HMMModel(
        [[0.7, 0.3], [0.2, 0.8]],
        [[0.8, 0.2], [0.3, 0.7]],
        [0.5, 0.5],
        QuantizedPolicyChannel([0.0, 1.0], [0.5], [[0.85, 0.15], [0.2, 0.8]]),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split()[0])):
            terminalreporter.write_line(line)
