from __future__ import annotations

import pytest

_VERDICTS: dict[int, tuple[bool, str]] = {}


class Verdicts:
    """Collects one verdict per acceptance criterion for the end-of-run summary."""

    def record(self, criterion: int, ok: bool, detail: str) -> None:
        _VERDICTS[criterion] = (bool(ok), detail)
        print(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def verdicts() -> Verdicts:
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 13):
        ok, detail = _VERDICTS.get(k, (False, "no verdict recorded (test errored or was deselected)"))
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
