import numpy as np
import pytest

from nmpec.bath import BathSpec, Pole
from nmpec.generator import SystemModel
from nmpec.operators import pauli_operator


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long running statistical checks")


def single_pole(g=1.0, omega=1j, channels=1):
    return BathSpec(channels, (Pole(tuple([g] * channels), omega),))


@pytest.fixture
def unit_bath():
    """g = 1, omega = i: C(t) = e^{-t}."""
    return single_pole()


@pytest.fixture
def dephasing_model():
    return SystemModel(np.zeros((2, 2)), (pauli_operator("Z"),), 0.1)


@pytest.fixture
def spin_boson_model():
    """H = -(Delta/2) Z with Delta = 2, S = X."""
    return SystemModel(-pauli_operator("Z"), (pauli_operator("X"),), 0.1)


@pytest.fixture
def commuting_model():
    """H = -(Delta/2) Z with Delta = 2, S = Z, lambda^2 = 0.01."""
    return SystemModel(-pauli_operator("Z"), (pauli_operator("Z"),), 0.1)


@pytest.fixture
def two_qubit_model():
    """H = (Delta/2)(ZI + IZ) with Delta = 8, S = (XI, IX), lambda^2 = 0.81."""
    h = 4.0 * (pauli_operator("ZI") + pauli_operator("IZ"))
    return SystemModel(h, (pauli_operator("XI"), pauli_operator("IX")), 0.9)


@pytest.fixture
def two_qubit_bath():
    return BathSpec(2, (Pole((1.0, 0.0), 1j), Pole((0.0, 1.0), 1j)))


@pytest.fixture
def plus_state():
    return np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_density(rng):
    def make(dim):
        m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        rho = m @ m.conj().T
        return rho / np.trace(rho)
    return make
