import os
import sys

import pytest

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, HERE)

from pmcu import _kernels_py  # noqa: E402

try:
    from pmcu import _kernels as _kernels_c  # noqa: E402
except ImportError:
    _kernels_c = None

FIXTURES = os.path.join(HERE, "fixtures")

KERNEL_IMPLS = [pytest.param(_kernels_py, id="python")]
if _kernels_c is not None:
    KERNEL_IMPLS.append(pytest.param(_kernels_c, id="cython"))


@pytest.fixture(params=KERNEL_IMPLS, scope="session")
def kimpl(request):
    """Each kernel implementation that is importable in this environment."""
    return request.param


@pytest.fixture
def fixture_path():
    return lambda name: os.path.join(FIXTURES, name)


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
