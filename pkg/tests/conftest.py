import numpy as np
import pytest

from qfuse.cli import bundled_image_path
from qfuse.imaging import read_image


def random_quat(rng, *shape):
    return rng.standard_normal(shape + (4,))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def scene():
    """Bundled 256 x 256 all-in-focus RGB scene in [0, 1]."""
    return read_image(bundled_image_path())


@pytest.fixture(scope="session")
def crop64(scene):
    return scene[96:160, 96:160].copy()


# acceptance criteria report: number -> (passed, detail)
ACCEPTANCE = {}
N_CRITERIA = 11


def record(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            tr.write_line(f"criterion {n:2d}: NOT RUN")
