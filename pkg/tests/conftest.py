import pytest

from singpert.model import example2_model

CRITERIA: dict[int, tuple[bool, str]] = {}


def record(number: int, ok: bool, detail: str = "") -> None:
    CRITERIA[number] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def example2():
    return example2_model()


@pytest.fixture(scope="session")
def example2_sym30(example2):
    from singpert.solver import solve_dde
    return solve_dde(example2, 30, "symbolic")
