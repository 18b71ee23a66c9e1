import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

# label -> outcome, in first-seen order; filled by the report hook below
_ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def golden_dialogues() -> list[tuple[str, dict]]:
    """The three reference dialogues as (transcript text, expected structure)."""
    out = []
    for i in (1, 2, 3):
        text = (FIXTURES / f"golden_dialogue_{i}.txt").read_text(encoding="utf-8")
        expected = json.loads(
            (FIXTURES / f"golden_dialogue_{i}.expected.json").read_text(encoding="utf-8")
        )
        out.append((text, expected))
    return out


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label = marker.args[0] if marker.args else item.name
    if report.when == "call":
        _ACCEPTANCE[label] = report.outcome
    elif report.outcome != "passed" and label not in _ACCEPTANCE:
        # setup/teardown error or a skip before the call phase
        _ACCEPTANCE[label] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome in _ACCEPTANCE.items():
        word = "PASS" if outcome == "passed" else "FAIL" if outcome == "failed" else outcome.upper()
        terminalreporter.write_line(f"{word}: {label}")
