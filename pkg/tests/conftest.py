import time

import pytest

_CRITERIA: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.call_passed = rep.passed


class Criterion:
    def __init__(self):
        self.label = None
        self.title = ""
        self.budget = None
        self.notes = []

    def __call__(self, label, title, budget=None):
        self.label, self.title, self.budget = label, title, budget
        return self

    def note(self, text):
        self.notes.append(text)


@pytest.fixture
def criterion(request):
    """Record a one-line verdict for an acceptance criterion."""
    c = Criterion()
    start = time.perf_counter()
    yield c
    if c.label is None:
        return
    elapsed = time.perf_counter() - start
    ok = getattr(request.node, "call_passed", False)
    timing = f"{elapsed:.1f}s" + (f" (budget {c.budget:g}s)" if c.budget else "")
    if c.budget and elapsed > c.budget:
        timing += " OVER BUDGET"
    detail = "; ".join(c.notes)
    _CRITERIA[c.label] = (f"criterion {c.label} {'PASS' if ok else 'FAIL'}: {c.title}"
                           f" [{timing}]" + (f" {detail}" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n])
