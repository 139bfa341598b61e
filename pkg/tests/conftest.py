import time
from contextlib import contextmanager

import pytest

_CRITERIA = {}


class Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.detail = ""

    @contextmanager
    def run(self, limit_s=None):
        t0 = time.perf_counter()
        ok = False
        try:
            yield self
            elapsed = time.perf_counter() - t0
            self.detail += f" [{elapsed:.1f}s]"
            if limit_s is not None:
                assert elapsed < limit_s, f"runtime {elapsed:.1f}s exceeds {limit_s}s"
            ok = True
        finally:
            _CRITERIA[self.number] = (ok, self.title, self.detail.strip())


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, title, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {title}: {detail}")
