import numpy as np
import pytest

from damasnet.scene import make_spiral_array
from damasnet.steering import build_steering, make_grid


@pytest.fixture(scope="session")
def geometry():
    return make_spiral_array()


@pytest.fixture(scope="session")
def desk_grid():
    return make_grid(21, 1.0, 2.5)


@pytest.fixture(scope="session")
def desk_steering(desk_grid, geometry):
    return build_steering(desk_grid, geometry, 2000.0, 343.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_psd(rng, m, rank=None):
    rank = m if rank is None else rank
    X = rng.standard_normal((m, rank)) + 1j * rng.standard_normal((m, rank))
    return X @ X.conj().T / rank


# acceptance results, filled in by test_acceptance.py and printed after the run
ACCEPTANCE: dict = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
