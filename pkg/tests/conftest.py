import zlib

import numpy as np
import pytest


@pytest.fixture
def rng(request):
    # stable per-test seed, so results do not depend on order or hash randomization
    return np.random.default_rng(zlib.crc32(request.node.nodeid.encode()))


_CRITERIA: dict[str, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, printed at session end."""

    def record(label, ok: bool, detail: str) -> bool:
        name = f"criterion {label}" if isinstance(label, int) else label
        _CRITERIA[name] = f"{name}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA.values():
            terminalreporter.write_line(line)
