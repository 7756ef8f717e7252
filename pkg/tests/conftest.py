import numpy as np
import pytest

from herosgan.signal import Signal, rng_for


@pytest.fixture
def rng():
    return rng_for(1234)


def make_signal(samples, dt=0.01, label="t"):
    return Signal(np.atleast_2d(np.asarray(samples, dtype=float)), dt, label)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
