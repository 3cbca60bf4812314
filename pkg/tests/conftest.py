import pytest

from tradegap.economy import Exponential, MarketModel, solve_equilibrium


@pytest.fixture(scope="session")
def model():
    return MarketModel()


@pytest.fixture(scope="session")
def eq(model):
    return solve_equilibrium(model)


@pytest.fixture(scope="session")
def exp_model():
    return MarketModel(asset=Exponential())


@pytest.fixture(scope="session")
def exp_eq(exp_model):
    return solve_equilibrium(exp_model)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
