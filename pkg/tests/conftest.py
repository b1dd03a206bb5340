import numpy as np
import pytest

from isplab.krylov import orthonormalize
from isplab.zoo import build, default_zoo


def shift(N):
    return np.diag(np.ones(N - 1), -1).astype(complex)


def e1(N):
    v = np.zeros(N, dtype=complex)
    v[0] = 1
    return v


def naive_enorm(A):
    """Definition-level double loop, 1-based weights."""
    A = np.asarray(A)
    total = 0.0
    for k in range(1, A.shape[0] + 1):
        for l in range(1, A.shape[1] + 1):
            total += 0.5 ** (k + l) * abs(A[k - 1, l - 1])
    return total


def random_operator(rng, N):
    return rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def shift8():
    return orthonormalize(shift(8), e1(8))


def zoo_forms(N):
    return [(z.operator_id, orthonormalize(*build(z))) for z in default_zoo(N)]


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
