import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record and assert one criterion: verdict(number, title, passed, detail)."""

    def record(number, title, passed, detail=""):
        line = f"[{number:>2}] {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        _VERDICTS.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s[1:3])):
            terminalreporter.write_line(line)
