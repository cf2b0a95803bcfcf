import warnings

import pytest

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_tail_warnings():
    from alohajam.errors import TailMassWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TailMassWarning)
        yield
