import pytest

from swarmlink.harness import fault_matrix, nominal_matrix, run_sweep

N_SEEDS = 10
FAULT_PROBABILITIES = (0.0, 0.2, 0.5, 0.7)


@pytest.fixture(scope="session")
def nominal_sweep():
    """The four link-count configs over seeds 0..9."""
    return run_sweep(nominal_matrix(N_SEEDS), workers=1)


@pytest.fixture(scope="session")
def fault_sweep():
    """Failure probabilities 0, 0.2, 0.5 and 0.7 at 40 robots and 2 links, seeds 0..9."""
    return run_sweep(fault_matrix(40, 2, FAULT_PROBABILITIES, N_SEEDS), workers=1)


# one verdict line per acceptance criterion, shown at the end of every run
VERDICTS: dict[str, str] = {}


def record_verdict(criterion: str, passed: bool, detail: str) -> bool:
    VERDICTS[criterion] = f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}"
    print(VERDICTS[criterion])
    return passed


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(VERDICTS, key=lambda k: int(k[1:])):
            terminalreporter.write_line(VERDICTS[key])
