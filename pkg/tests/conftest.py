import math

import numpy as np
import pytest

from temcodec.signal import SignalSpec, generate

# criterion number -> result line, filled by test_acceptance
ACCEPTANCE = {}

OMEGA0 = 100 * math.pi
SUPPORT = (-0.45, 0.45)


def make_signal(seed, omega0=OMEGA0, c=1.0, support=SUPPORT):
    return generate(SignalSpec(omega0, c, support, seed=seed))


@pytest.fixture(scope="session")
def spec():
    return SignalSpec(OMEGA0, 1.0, SUPPORT, seed=7)


@pytest.fixture(scope="session")
def signal(spec):
    return generate(spec)


@pytest.fixture(scope="session")
def zero_signal(spec):
    n = generate(spec).coeffs.size
    return generate(spec, coeffs=np.zeros(n))


@pytest.fixture(scope="session")
def ensemble():
    """Twelve random signals shared by the property tests."""
    return [make_signal(seed) for seed in range(100, 112)]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
