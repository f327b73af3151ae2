import contextlib

import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """Context manager recording one acceptance criterion as PASS or FAIL."""
    results = request.config.stash[_RESULTS]

    @contextlib.contextmanager
    def record(number: int, title: str):
        notes: list = []
        try:
            yield notes.append
        except BaseException as exc:
            line = f"criterion {number:2d} FAIL  {title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
            results[number] = line
            print(line)
            raise
        line = f"criterion {number:2d} PASS  {title}" + (f" ({'; '.join(notes)})" if notes else "")
        results[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash[_RESULTS]
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
