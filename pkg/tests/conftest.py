import numpy as np
import pytest

from dcmsim import hilbert as hc


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rand_c(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def rand_herm(rng, d):
    a = rand_c(rng, d, d)
    return 0.5 * (a + a.conj().T)


SX, SY, SZ = hc.preset("pauli_x"), hc.preset("pauli_y"), hc.preset("pauli_z")
I2 = np.eye(2, dtype=complex)
PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)


ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """Log one PASS/FAIL line for an acceptance criterion."""
    def _record(number, title, passed, detail, elapsed):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail} | {elapsed:.1f}s"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
