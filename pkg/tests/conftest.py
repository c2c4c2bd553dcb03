import numpy as np
import pytest

from ssmstream import DiscreteParams, SsmConfig, discretize, init_s4d_lin

_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(criterion: int, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    _ACCEPTANCE_LINES.append(f"ACCEPTANCE {criterion} {status}: {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def running_sum_params(channels: int = 1) -> DiscreteParams:
    """A_bar=1, B_bar=1, C_bar=1, D=0: output is the running sum of the input."""
    ones = np.ones((channels, 1), dtype=np.complex128)
    return DiscreteParams(A_bar=ones, B_bar=ones, C_bar=ones,
                          D=np.zeros(channels))


def random_system(channels: int, state_size: int, seed: int) -> DiscreteParams:
    cfg = SsmConfig(channels=channels, state_size=state_size, seed=seed)
    return discretize(init_s4d_lin(cfg))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
