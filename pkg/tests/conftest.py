import pytest

from pbcover import fading, linkmodel

_REPORT = []


def record(criterion: str, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    _REPORT.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def baseline():
    return linkmodel.RfConfig.baseline()


@pytest.fixture(scope="session")
def qos():
    return fading.QosSpec.from_db(5.0, 0.05)


@pytest.fixture(scope="session")
def spec():
    return fading.FadingSpec()
