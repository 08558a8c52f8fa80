import pytest

from potchain.chain import GenesisConfig, deterministic_roster, new_chain


@pytest.fixture(scope="session")
def ids():
    return deterministic_roster(4, 0)


@pytest.fixture(scope="session")
def genesis_config(ids):
    return GenesisConfig("testnet", tuple(i.node for i in ids), 20, 5)


@pytest.fixture
def chain0(genesis_config):
    return new_chain(genesis_config.genesis_block())


# one PASS/FAIL line per acceptance criterion
_criteria: dict[str, bool] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or report.failed:
        name = report.nodeid.split("::")[1].split("[")[0]
        _criteria[name] = _criteria.get(name, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        number, label = name.split("_", 3)[2], name.split("_", 3)[3]
        terminalreporter.write_line(f"criterion {int(number):2d} {label:<28} {'PASS' if _criteria[name] else 'FAIL'}")
