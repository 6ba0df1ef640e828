from __future__ import annotations

import re
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


def read_hex(name: str) -> bytes:
    """Load a golden hex dump; '#' starts a comment."""
    text = (FIXTURES / "golden" / name).read_text()
    digits = "".join(line.split("#", 1)[0] for line in text.splitlines())
    return bytes.fromhex(digits)


@pytest.fixture
def golden():
    return read_hex


# --- one summary line per acceptance criterion ---------------------------------------

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")
_results: dict[int, list[tuple[bool, str]]] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if m is None:
        return
    if report.when == "call" or report.failed:
        details = [v for k, v in report.user_properties if k == "measured"]
        _results.setdefault(int(m.group(1)), []).append((report.passed, "; ".join(details)))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    module = sys.modules.get("test_acceptance")
    titles = getattr(module, "CRITERIA", {})
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        runs = _results[n]
        ok = all(passed for passed, _ in runs)
        measured = " | ".join(d for _, d in runs if d)
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {titles.get(n, '')}"
        if measured:
            line += f"  [{measured}]"
        terminalreporter.write_line(line)
