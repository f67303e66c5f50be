import numpy as np
import pytest

from qpath.localqp import LocalModel
from qpath.validation import ValidationContext


@pytest.fixture(scope="session")
def ctx():
    """Shared pipeline products (cycles, frames, Riccati solutions, paths)."""
    return ValidationContext()


def _setup(ctx, name):
    spec, cycle, frame, coeffs, G = ctx.setup(name)
    return {"spec": spec, "cycle": cycle, "frame": frame, "coeffs": coeffs, "G": G, "model": LocalModel(cycle, frame, G)}


@pytest.fixture(scope="session")
def hopf(ctx):
    return _setup(ctx, "hopf")


@pytest.fixture(scope="session")
def vdp(ctx):
    return _setup(ctx, "vdp")


@pytest.fixture(scope="session")
def twolc(ctx):
    return _setup(ctx, "twolc")


@pytest.fixture(scope="session")
def lv3d(ctx):
    return _setup(ctx, "lv3d")


@pytest.fixture(scope="session")
def net5d(ctx):
    return _setup(ctx, "net5d")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
