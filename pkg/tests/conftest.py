import pytest

from quanteit import benchmark


@pytest.fixture(scope="session")
def two_lung():
    return benchmark.two_lung(64)


@pytest.fixture(scope="session")
def small_bench():
    return benchmark.simulate(benchmark.GeometrySpec.grid2d(16, 16), n_electrodes=8)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
