import os

import numpy as np
import pytest

from gsnlab import GsnConfig, GsnModel

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "data")
FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


@pytest.fixture
def small_dae():
    cfg = GsnConfig(visible_size=2, hidden_sizes=[3], input_corruption_p=0.3, eta_in=0.0, eta_out=0.0, seed=5)
    model = GsnModel(cfg)
    model.params.values["b0"][:] = [[0.7, -0.4]]
    model.params.values["b1"][:] = [[0.3, -0.2, 0.5]]
    model.params.values["W1"][:] *= 4.0
    return model


ACCEPTANCE = []


def record(criterion, ok, detail):
    """Log one acceptance verdict; the lines are repeated in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
