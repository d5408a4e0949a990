import pytest

from repro_mcts.env import SimEnvironment, load_sim_app
from repro_mcts.fixtures import SCENARIOS
from repro_mcts.oracle import OraclePair, ScriptedOracle, load_scripted_oracle

_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line; asserts after logging so failures are listed too."""

    def record(name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" -- {detail}" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fakestandby():
    return SCENARIOS["fakestandby"]


@pytest.fixture(scope="session")
def fs_app(fakestandby):
    return load_sim_app(fakestandby.app)


@pytest.fixture(scope="session")
def fs_oracle_spec(fakestandby, fs_app):
    return load_scripted_oracle(fakestandby.oracle, fs_app)


@pytest.fixture(scope="session")
def fs_report(fakestandby):
    return fakestandby.report.read_text()


@pytest.fixture
def fs_env(fs_app):
    return SimEnvironment(fs_app)


def scripted_pair(scenario, seed):
    app = load_sim_app(scenario.app)
    return app, OraclePair.of(ScriptedOracle(load_scripted_oracle(scenario.oracle, app), seed))
