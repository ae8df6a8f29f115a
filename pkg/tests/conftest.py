import contextlib
import time

import pytest

# (number, title, verdict, detail) for every acceptance criterion that ran
CRITERIA = []


class Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.notes = []
        self.t0 = time.perf_counter()

    def note(self, text):
        self.notes.append(str(text))

    @property
    def elapsed(self):
        return time.perf_counter() - self.t0


@pytest.fixture
def criterion():
    """Context manager factory that records one PASS/FAIL line per acceptance criterion."""

    @contextlib.contextmanager
    def run(number, title):
        c = Criterion(number, title)
        try:
            yield c
        except BaseException as exc:
            msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
            CRITERIA.append((number, title, "FAIL", "; ".join(c.notes + [msg])))
            raise
        CRITERIA.append((number, title, "PASS", "; ".join(c.notes)))

    return run


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, verdict, detail in sorted(CRITERIA):
        terminalreporter.write_line(f"{verdict} criterion {number:>2}: {title}"
                                    + (f" ({detail})" if detail else ""))
