import numpy as np
import pytest

import vscmash as vm


@pytest.fixture(scope="session")
def table_params():
    """Tabulated model parameters at the default sweep point."""
    return vm.derive_params()


@pytest.fixture(scope="session")
def molecule(table_params):
    """(grid, solution, truncated operators) for the tabulated double well."""
    from vscmash.model import molecule_for
    return molecule_for(table_params)


@pytest.fixture(scope="session")
def model_quantum(table_params):
    return vm.build_energy_model(table_params, "quantum")


@pytest.fixture(scope="session")
def model_quantum_bare(table_params):
    return vm.build_energy_model(table_params, "quantum-bare")


@pytest.fixture(scope="session")
def model_classical(table_params):
    return vm.build_energy_model(table_params, "classical")


def make_two_level_model(delta, kappa=0.0, omega=5e-3, g=0.0, n_modes=1):
    """Minimal synthetic two-state model for integrator oracles.

    H = [[0, delta], [delta, kappa]];  one bath of ``n_modes`` harmonic
    modes (frequency omega, coupling g) attached to sigma_z-like O1; the
    second bath is decoupled.
    """
    H0 = np.array([[0.0, delta], [delta, kappa]])
    O1 = np.array([[1.0, 0.0], [0.0, -1.0]])
    O2 = np.zeros((2, 2))
    g1 = np.full(n_modes, g)
    w1 = np.full(n_modes, omega)
    g2 = np.zeros(1)
    w2 = np.full(1, omega)
    h = np.array([[1.0, 0.0], [0.0, 0.0]])
    return dict(H0ct=H0, O1=O1, O2=O2, g1=g1, w1=w1, g2=g2, w2=w2, h_ext=h)
