"""Pytest Fixtures"""

import pytest

from hilbert import named_state, pauli
from pointer import default_grid, gaussian
from rng import derive_stream


@pytest.fixture
def rng_stream():
    """A fresh seeded stream per test."""
    return derive_stream(20240501, 0)


@pytest.fixture(scope="session")
def sigma_z():
    """The sigma_z observable."""
    return pauli("z")


@pytest.fixture(scope="session")
def spin_states():
    """The six named spin-1/2 eigenstates, keyed by label."""
    return {label: named_state(label) for label in ("x+", "x-", "y+", "y-", "z+", "z-")}


@pytest.fixture(scope="session")
def unit_pointer():
    """A centred Gaussian pointer with sigma_p = 1 on the default grid."""
    return gaussian(default_grid(1.0), 0.0, 0.0, 1.0)


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    """
    Pins WEAKMEAS_THREADS so the environment running the suite cannot change
    worker counts. Tests that exercise the variable override it themselves.
    """
    monkeypatch.setenv("WEAKMEAS_THREADS", "2")
