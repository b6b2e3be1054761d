import numpy as np
import pytest

from wienerbayes.validation import random_instance


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def instance(rng):
    """A random LTI model with T=6 and its input."""
    return random_instance(rng, 6)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
