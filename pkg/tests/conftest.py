import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def report(request):
    """Record one acceptance line: ``report(number, name, status, detail)``."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", {})

    def add(number, name, status, detail):
        lines[number] = f"[{status:<7}] {number:>2}. {name}: {detail}"
        print(lines[number])

    return add


def pytest_terminal_summary(terminalreporter, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
