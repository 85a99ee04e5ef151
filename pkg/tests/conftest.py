"""Collects one verdict line per acceptance criterion and prints them at the end of the run."""

import pytest

_VERDICTS = []


class Verdicts:
    def __init__(self, name):
        self.name = name
        self.done = False

    def record(self, ok, detail):
        self.done = True
        status = "PASS" if ok is True else ("FAIL" if ok is False else ok)
        line = f"{status:<7} {self.name}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok


@pytest.fixture
def verdict(request):
    v = Verdicts(request.node.get_closest_marker("criterion").args[0])
    yield v
    if not v.done:
        rep = getattr(request.node, "rep_call", None)
        why = "skipped" if rep is not None and rep.skipped else "raised before reaching a verdict"
        v.record("SKIP" if why == "skipped" else False, why)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
