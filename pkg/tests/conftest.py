import numpy as np
import pytest

from trilink import coding


@pytest.fixture(scope="session")
def ldpc_code():
    return coding.construct_code(1)


@pytest.fixture()
def rng_np():
    return np.random.default_rng(0xC0FFEE)


def random_hpd(rng, n, ridge=1.0):
    """Random Hermitian positive-definite matrix G G' + ridge I."""
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return g @ g.conj().T + ridge * np.eye(n)
