import pytest

from tontine.merton import MarketParams
from tontine.mortality import bundled_table

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def female65():
    return bundled_table("female").from_age(65)


@pytest.fixture(scope="session")
def mkt():
    return MarketParams()


@pytest.fixture
def report():
    """Record one summary line per acceptance criterion."""

    def _report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
