import numpy as np
import pytest

from acoustic_occupancy import kernels

_KERNEL_NAMES = ("viterbi_log", "forward_log", "backward_log", "gmm_log_joint")

# (criterion, passed, detail) tuples recorded by test_acceptance.py
ACCEPTANCE_RESULTS = []


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request, monkeypatch):
    """Run a test once per kernel backend (python, and cython when built)."""
    module = kernels.available_backends()[request.param]
    for name in _KERNEL_NAMES:
        monkeypatch.setattr(kernels, name, getattr(module, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
