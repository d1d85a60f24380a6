"""Collects ``criterion`` marks and prints one verdict line per criterion."""
from collections import OrderedDict

import pytest

_verdicts: "OrderedDict[str, list]" = OrderedDict()


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    ident, text = mark.args
    entry = _verdicts.setdefault(ident, [text, True, False])
    if call.when == "call" or call.excinfo is not None:
        entry[2] = True
        if call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception):
            entry[1] = False


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for ident in sorted(_verdicts, key=lambda s: int(s.split("-")[1])):
        text, ok, ran = _verdicts[ident]
        verdict = "PASS" if ok and ran else ("FAIL" if ran else "NOT RUN")
        terminalreporter.write_line(f"{ident} {verdict}: {text}")
