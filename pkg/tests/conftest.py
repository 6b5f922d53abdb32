from __future__ import annotations

import pytest

ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


@pytest.fixture(scope="session")
def acceptance_record():
    def record(number: int, title: str, passed: bool, detail: str = ""):
        ACCEPTANCE[number] = (title, "PASS" if passed else "FAIL", detail)
        print(f"acceptance {number} [{ACCEPTANCE[number][1]}] {title}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, verdict, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{number}. {verdict}  {title}: {detail}")
