import numpy as np
import pytest

ACCEPTANCE = {
    1: "secular closed form",
    2: "zero-mode determinant",
    3: "eigenvalue oracles",
    4: "resolvent identity",
    5: "omega certification",
    6: "contractivity suite",
    7: "quasi-contractivity",
    8: "reality",
    9: "adjoint pairing",
    10: "BD vs BD' discrepancy",
    11: "Laplace cross-check",
    12: "transport finite speed",
}
_results: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """record(criterion, passed, detail) stores one line for the terminal summary."""

    def _record(num: int, passed: bool, detail: str) -> bool:
        _results[num] = (bool(passed), detail)
        print(f"criterion {num:2d} [{ACCEPTANCE[num]}]: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return _record


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num, name in ACCEPTANCE.items():
        passed, detail = _results.get(num, (False, "not run"))
        terminalreporter.write_line(f"{num:2d}. {'PASS' if passed else 'FAIL'}  {name}: {detail}")
