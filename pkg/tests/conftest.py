import time

import pytest

from arfa.scenario import builtin_scenario
from arfa.simulation import run_experiment

# Filled by tests/test_acceptance.py; printed once at the end of the session.
ACCEPTANCE_LINES: dict[str, str] = {}


def run_scenario(name: str):
    sc = builtin_scenario(name)
    t0 = time.perf_counter()
    results = run_experiment(
        sc.base_config,
        sc.operators,
        n_trials=sc.trials,
        policies=sc.policies,
        shared_failure_stream=sc.shared_failure_stream,
    )
    return sc, results, time.perf_counter() - t0


@pytest.fixture(scope="session")
def default_experiment():
    """(scenario, results per policy, wall seconds) for the shipped default scenario."""
    return run_scenario("default")


@pytest.fixture(scope="session")
def catalog_experiment():
    return run_scenario("catalog")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
