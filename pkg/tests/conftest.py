import numpy as np
import pytest

from solgate.experiments import initial_state, run_instanton_scenario
from solgate.model import CircuitParams, GateSpec

ACCEPTANCE: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def params():
    return CircuitParams()


@pytest.fixture(scope="session")
def and_gate():
    return GateSpec.make("AND")


@pytest.fixture(scope="session")
def or_gate():
    return GateSpec.make("OR")


@pytest.fixture(scope="session")
def and_run(and_gate, params):
    """Reference AND run from the perturbed critical point (10 mV on v2)."""
    return run_instanton_scenario(and_gate, 1e-2, params)


@pytest.fixture(scope="session")
def or_run(or_gate, params):
    return run_instanton_scenario(or_gate, 1e-2, params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def start_state(and_gate):
    return initial_state(and_gate, 1e-2)
