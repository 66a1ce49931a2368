import numpy as np
import pytest

from affinewalk.model import AffineMixtureModel, golden_model

LN2 = np.log(2.0)


def scalar_model(p=0.3):
    """``M in {2, 1/2}`` with probabilities ``(p, 1 - p)`` and ``Q = 1``."""
    return AffineMixtureModel.from_arrays([p, 1 - p], [[[2.0]], [[0.5]]], [[1.0], [1.0]])


def constant_model(g, b):
    return AffineMixtureModel.from_arrays([1.0], [g], [b])


def rotation(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


@pytest.fixture(scope="session")
def scalar():
    return scalar_model()


@pytest.fixture(scope="session")
def golden():
    return golden_model()


ACCEPTANCE_LINES = []


def record(number, ok, text):
    """Store one acceptance line; the lines are printed in the terminal summary."""
    ACCEPTANCE_LINES.append((number, f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {text}"))
    print(ACCEPTANCE_LINES[-1][1])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
