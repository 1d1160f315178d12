import math

import numpy as np
import pytest

from spiralbw import _kernels
from spiralbw.qstate import StateVector, product_labels, pure_density

SQRT2 = math.sqrt(2.0)


def bell_highl():
    """(|-28,28> + |-32,32>)/sqrt2 on the 4-dim product basis."""
    psi = StateVector.from_terms({(-28, 28): 1.0, (-32, 32): 1.0}, labels=product_labels([-28, -32], [28, 32]))
    return pure_density(psi)


@pytest.fixture
def bell():
    return bell_highl()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def kernel_backends():
    mods = [_kernels.fallback]
    if _kernels.compiled is not None:
        mods.append(_kernels.compiled)
    return mods


@pytest.fixture(params=kernel_backends(), ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def backend(request):
    return request.param


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
