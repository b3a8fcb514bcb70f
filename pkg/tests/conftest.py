import pytest

from brokenpde import BrokenProblem, CoefficientModel, GridSpec, picard_solve


@pytest.fixture(scope="session")
def grid65():
    return GridSpec.square(65)


@pytest.fixture(scope="session")
def broken_s0(grid65):
    """Constant-phase s = 0 solve with g = x on a 65x65 grid."""
    m = CoefficientModel(s=0, a_plus="2", a_minus="1")
    return m, picard_solve(BrokenProblem(grid65, m, "x"))


@pytest.fixture(scope="session")
def broken_s1(grid65):
    m = CoefficientModel(s=1, a="1", b="1")
    return m, picard_solve(BrokenProblem(grid65, m, "x"))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(RESULTS, key=lambda k: int(k.split("-")[1])):
        terminalreporter.write_line(RESULTS[cid].line())
