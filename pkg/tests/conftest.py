"""Collects one status line per acceptance criterion and prints them at the end of the run."""

import pytest

RESULTS = {}


class Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.notes, self.status = [], None

    def note(self, msg):
        self.notes.append(str(msg))

    def warn(self, msg):
        self.status = "WARN"
        self.note(msg)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            status = self.status or "PASS"
        elif issubclass(exc_type, pytest.skip.Exception):
            status = "SKIP"
        else:
            status = "FAIL"
            first = str(exc).strip().splitlines()[0] if str(exc).strip() else ""
            self.note(f"{exc_type.__name__}: {first}"[:200])
        RESULTS[self.number] = (status, self.title, "; ".join(self.notes))
        return False


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        status, title, notes = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}: {title}" + (f" -- {notes}" if notes else ""))
