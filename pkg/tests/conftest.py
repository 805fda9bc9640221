import numpy as np
import pytest

from entroact.catalog import build_system, builtin
from entroact.spaces import circle, sample_grid


@pytest.fixture(scope="session")
def systems():
    names = ["expanding23", "doubling", "rotations", "mp_rot", "example43", "example44", "cat"]
    return {n: build_system(builtin(n)) for n in names}


@pytest.fixture
def P8():
    return sample_grid(circle(), 8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(criterion, ok, detail):
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
