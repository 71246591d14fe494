import functools

import pytest

from fbmchaos.kernel import HurstParams, TimeGrid, build_kernel_table


@functools.lru_cache(maxsize=None)
def params_for(H: float, T: float = 1.0) -> HurstParams:
    return HurstParams.calibrated(H, T)


def table_for(H: float, N: int, T: float = 1.0):
    return build_kernel_table(params_for(H, T), TimeGrid.uniform(N, T))


@pytest.fixture
def table():
    return table_for


ACCEPTANCE = []


def record(number: int, title: str, passed: bool, detail: str = ""):
    """Log one criterion verdict; the summary hook prints them after the run."""
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
