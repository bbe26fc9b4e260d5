import numpy as np
import pytest

from surveyband import _pykernels
from surveyband.io import bundled_surveys

try:
    from surveyband import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [_pykernels] + ([_ckernels] if _ckernels is not None else [])


@pytest.fixture(params=BACKENDS, ids=lambda m: m.BACKEND)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def surveys():
    return bundled_surveys()


def assert_conserved(states, tol=1e-9):
    states = np.asarray(states)
    assert np.all(np.abs(states.sum(axis=-1) - 100.0) < tol)


# filled by test_acceptance.py, one line per criterion
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
