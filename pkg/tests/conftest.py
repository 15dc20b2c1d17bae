import numpy as np
import pytest

from kifid.state import KickedIsingParams

INTEGRABLE = KickedIsingParams(1.0, 1.4, 0.0)
INTERMEDIATE = KickedIsingParams(1.0, 1.4, 0.4)
ERGODIC = KickedIsingParams(1.0, 1.4, 1.4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_amplitudes(rng, n_sites, batch=None):
    shape = (1 << n_sites,) if batch is None else (batch, 1 << n_sites)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def emit(number: int, ok: bool, text: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
