import numpy as np
import pytest

import vscmash as vm
from vscmash.dvr import DvrGrid, double_well_potential, kinetic_matrix
from vscmash.units import AU_TO_WAVENUMBER, WAVENUMBER_TO_AU


def test_potential_at_origin_and_minima(table_params):
    p = table_params
    assert double_well_potential(0.0, p.M, p.omega_b, p.E_b) == 0.0
    # stationary-point algebra on the quartic: minima at +-sqrt(4 E_b / M w_b^2)
    R_min = np.sqrt(4.0 * p.E_b / (p.M * p.omega_b**2))
    assert double_well_potential(R_min, p.M, p.omega_b, p.E_b) == pytest.approx(-p.E_b, rel=1e-12)
    # numerically a minimum
    eps = 1e-6
    v0 = double_well_potential(R_min, p.M, p.omega_b, p.E_b)
    assert double_well_potential(R_min + eps, p.M, p.omega_b, p.E_b) > v0
    assert double_well_potential(R_min - eps, p.M, p.omega_b, p.E_b) > v0


def test_harmonic_oracle(table_params):
    """Swapping in (1/2) M w^2 R^2 must reproduce (n + 1/2) w for n <= 5."""
    w = 1000.0 * WAVENUMBER_TO_AU
    grid = DvrGrid.build(100.0, 1001)
    T = kinetic_matrix(grid, table_params.M)
    V = 0.5 * table_params.M * w**2 * grid.points**2
    evals = np.linalg.eigvalsh(T + np.diag(V))[:6]
    exact = (np.arange(6) + 0.5) * w
    assert np.max(np.abs(evals - exact) / exact) < 1e-6


def test_grid_properties(table_params):
    grid = DvrGrid.build(table_params.R_max, table_params.n_R)
    d = np.diff(grid.points)
    assert np.allclose(d, d[0], rtol=0, atol=1e-12)
    assert grid.points[0] == -grid.points[-1]


def test_spectroscopy(molecule):
    _, sol, _ = molecule
    # resonance target
    assert abs(sol.omega_0_cm1 - 1190.0) < 5.0
    # doublet ordering and tunneling splittings
    E = sol.energies
    assert E[0] < E[1] < E[2] < E[3]
    assert sol.Delta0 > 0 and sol.Delta1 > 0
    assert sol.Delta0 < 0.05 * sol.Delta1          # deep-well asymptotics


def test_eigenvectors_orthonormal_and_parity(molecule):
    grid, sol, _ = molecule
    V = sol.vectors
    gram = V.T @ V
    assert np.abs(gram - np.eye(4)).max() < 1e-10
    # symmetric potential: v0, v2 even; v1, v3 odd (amplitude asymmetry < 1e-8)
    flip = V[::-1, :]
    for k, sign in ((0, 1), (1, -1), (2, 1), (3, -1)):
        assert np.abs(V[:, k] - sign * flip[:, k]).max() < 1e-8


def test_diabatization(molecule):
    grid, sol, trunc = molecule
    U = sol.U_diab
    assert np.abs(U.T @ U - np.eye(4)).max() < 1e-12
    # applying the involution twice returns the eigenbasis H (diagonal)
    H_eig = U @ trunc.H_R @ U.T
    assert np.abs(H_eig - np.diag(sol.energies)).max() < 1e-12

    # localization: <L|R|L> < 0 < <R|R|R>, and for the excited pair too
    R = trunc.R_op
    assert R[0, 0] < 0 < R[1, 1]
    assert R[2, 2] < 0 < R[3, 3]

    # block form: no coupling between ground and excited doublets
    H = trunc.H_R
    assert np.abs(H[:2, 2:]).max() == 0.0
    assert H[0, 0] == pytest.approx(sol.Ebar0, rel=1e-12)
    assert H[2, 2] == pytest.approx(sol.Ebar1, rel=1e-12)
    assert abs(H[0, 1]) == pytest.approx(sol.Delta0, rel=1e-10)
    assert abs(H[2, 3]) == pytest.approx(sol.Delta1, rel=1e-10)


def test_heaviside_operator(molecule):
    grid, sol, trunc = molecule
    h = trunc.h_R
    assert np.abs(h - h.T).max() < 1e-14
    evals = np.linalg.eigvalsh(h)
    assert evals.min() > -1e-10 and evals.max() < 1 + 1e-10
    assert abs(np.trace(h) - 2.0) < 0.05
    # localized diagonal entries
    assert h[0, 0] > 0.98 and h[1, 1] < 0.02
    # partition of unity on the grid
    hg = (grid.points < 0).astype(float)
    assert np.all(hg + (1.0 - hg) == 1.0)
    assert hg[grid.points.size // 2] == 0.0        # h = 0 at R = 0 exactly


@pytest.mark.slow
def test_eigenvalue_grid_convergence(table_params):
    """Doubling n_R changes E_0..E_3 by < 1e-8 a.u."""
    from scipy.linalg import eigh as scipy_eigh
    p = table_params
    vals = {}
    for n_R in (2001, 4001):
        grid = DvrGrid.build(p.R_max, n_R)
        T = kinetic_matrix(grid, p.M)
        V = double_well_potential(grid.points, p.M, p.omega_b, p.E_b)
        vals[n_R] = scipy_eigh(T + np.diag(V), subset_by_index=(0, 3),
                               eigvals_only=True, driver="evr")
    assert np.abs(vals[2001] - vals[4001]).max() < 1e-8
