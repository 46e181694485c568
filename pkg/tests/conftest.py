import pytest

_CRITERIA: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    num, title = mark.args
    entry = _CRITERIA.setdefault(num, (title, []))
    if call.excinfo is not None:
        entry[1].append(f"{item.name}: {call.excinfo.typename}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, failures = _CRITERIA[num]
        status = "PASS" if not failures else "FAIL"
        line = f"criterion {num:2d} {status}  {title}"
        if failures:
            line += "  (" + "; ".join(failures) + ")"
        terminalreporter.write_line(line)

from fairsub.generator import desk_params, example1_instance, generate_instance
from fairsub.network import fixture


@pytest.fixture
def t1():
    return fixture("T1")


@pytest.fixture
def d1():
    return fixture("D1")


@pytest.fixture
def p3():
    return fixture("P3")


@pytest.fixture(scope="session")
def e1():
    return example1_instance()


@pytest.fixture(scope="session")
def desk_suite():
    """Small generated instances every backend solves exactly in well under a second."""
    return [generate_instance(desk_params(seed)) for seed in range(12)]
