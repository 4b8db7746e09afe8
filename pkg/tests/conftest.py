import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fairalloc.lp import kernel  # noqa: E402

BACKENDS = ["python"] + (["compiled"] if kernel.compiled_available() else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    before = kernel.BACKEND
    kernel.use(request.param)
    yield request.param
    kernel.use(before)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
