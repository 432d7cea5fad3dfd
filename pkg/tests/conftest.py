import pytest
from hypothesis import settings

from sgk.harmonic import harmonic_structure
from sgk.measures import energy_orthobasis
from sgk.selfsim import m_matrices

settings.register_profile("default", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("default")


@pytest.fixture(scope="session")
def hs2():
    return harmonic_structure(2)


@pytest.fixture(scope="session")
def hs3():
    return harmonic_structure(3)


@pytest.fixture(scope="session")
def hs4():
    return harmonic_structure(4)


@pytest.fixture(scope="session")
def ec2(hs2):
    return energy_orthobasis(hs2)


@pytest.fixture(scope="session")
def ec3(hs3):
    return energy_orthobasis(hs3)


@pytest.fixture(scope="session")
def mm2(hs2):
    return m_matrices(hs2)


@pytest.fixture(scope="session")
def mm3(hs3):
    return m_matrices(hs3)


_criteria: list[tuple[str, str]] = []


@pytest.fixture
def criterion(record_property):
    """Tag a test as an acceptance criterion for the terminal summary."""

    def tag(number: int, title: str) -> None:
        record_property("criterion", f"{number:>2}  {title}")

    return tag


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    for name, value in report.user_properties:
        if name == "criterion":
            _criteria.append((value, "PASS" if report.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for value, outcome in sorted(_criteria, key=lambda t: int(t[0].split()[0])):
        terminalreporter.write_line(f"{outcome}  {value}")
