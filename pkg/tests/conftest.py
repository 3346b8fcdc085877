import json
import math
from pathlib import Path

import numpy as np
import pytest

from qsanov import models as M

ORACLE_PATH = Path(__file__).parent / "oracles" / "expected.json"


@pytest.fixture(scope="session")
def oracle():
    return json.loads(ORACLE_PATH.read_text())


def bern(p0):
    """Binary iid source with probability ``p0`` for letter 0."""
    return M.ClassicalIID([p0, 1.0 - p0])


def random_density(rng, d, rank=None, real=False):
    k = d if rank is None else rank
    g = rng.normal(size=(d, k))
    if not real:
        g = g + 1j * rng.normal(size=(d, k))
    r = g @ g.conj().T
    return r / np.trace(r).real


def random_hermitian(rng, d):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (g + g.conj().T)


def rotated_qubit_pair():
    c, s = math.cos(math.pi / 8), math.sin(math.pi / 8)
    R = np.array([[c, -s], [s, c]])
    return np.diag([1.0, 0.0]), R @ np.diag([0.75, 0.25]) @ R.T


def decode(m):
    return np.array(m["re"]) + 1j * np.array(m["im"])


LAZY_T = [[0.75, 0.25], [0.25, 0.75]]
SWAP_T = [[0.0, 1.0], [1.0, 0.0]]


ACCEPTANCE_LINES = {}


def report_criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
