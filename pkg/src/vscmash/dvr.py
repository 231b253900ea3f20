"""Double-well reaction coordinate on a sinc-DVR grid.

Builds the kinetic/potential matrices on a uniform grid, solves for the
vibrational eigenstates, rotates the two lowest doublets into
left/right-localized diabats, and projects the operators needed by the
dynamics (Hamiltonian, position, reactant projector) into the truncated
four-state subspace.
"""

from dataclasses import dataclass, field

import numpy as np

from .units import AU_TO_WAVENUMBER


class NumericalError(RuntimeError):
    """A numerical procedure failed to converge or went out of bounds."""


@dataclass(frozen=True)
class DvrGrid:
    """Uniform position grid, symmetric about R = 0."""
    points: np.ndarray
    spacing: float

    @classmethod
    def build(cls, R_max, n_R):
        pts = np.linspace(-R_max, R_max, n_R)
        return cls(points=pts, spacing=pts[1] - pts[0])

    @property
    def n(self):
        return self.points.size


def double_well_potential(R, M, omega_b, E_b):
    """Quartic double well: (M^2 w_b^4 / 16 E_b) R^4 - (1/2) M w_b^2 R^2.

    Minima sit at R = +-sqrt(4 E_b / (M w_b^2)) with V = -E_b; the barrier
    top is at R = 0 with V = 0.
    """
    R = np.asarray(R, dtype=float)
    return (M**2 * omega_b**4 / (16.0 * E_b)) * R**4 - 0.5 * M * omega_b**2 * R**2


def kinetic_matrix(grid, M):
    """Sinc-DVR kinetic-energy matrix for a particle of mass M.

    Diagonal pi^2/(6 M dR^2) (1 + 2/N^2); off-diagonal
    pi^2/(M N^2 dR^2) (-1)^(j-i)/sin^2(pi (j-i)/N).
    """
    n = grid.n
    dR = grid.spacing
    idx = np.arange(n)
    diff = idx[:, None] - idx[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        off = (np.pi**2 / (M * n**2 * dR**2)) * ((-1.0) ** diff / np.sin(np.pi * diff / n) ** 2)
    diag = np.pi**2 / (6.0 * M * dR**2) * (1.0 + 2.0 / n**2)
    T = np.where(diff == 0, diag, off)
    return 0.5 * (T + T.T)       # symmetrize roundoff


def build_dvr_matrices(grid, params):
    """Kinetic matrix and diagonal double-well potential on the grid."""
    T = kinetic_matrix(grid, params.M)
    V = double_well_potential(grid.points, params.M, params.omega_b, params.E_b)
    return T, np.diag(V)


@dataclass(frozen=True)
class VibrationalSolution:
    """Lowest four eigenstates and their diabatization."""
    energies: np.ndarray          # E_0..E_3
    vectors: np.ndarray           # (n_R, 4), sign-fixed
    Ebar0: float                  # mean ground-doublet energy
    Ebar1: float                  # mean excited-doublet energy
    Delta0: float                 # ground tunneling splitting / 2
    Delta1: float                 # excited tunneling splitting / 2
    U_diab: np.ndarray            # (4, 4), eigenbasis -> {L, R, L', R'}
    all_energies: np.ndarray = field(repr=False, default=None)

    @property
    def omega_0(self):
        """Doublet-to-doublet transition frequency (the resonance target)."""
        return self.Ebar1 - self.Ebar0

    @property
    def omega_0_cm1(self):
        return self.omega_0 * AU_TO_WAVENUMBER


def _fix_signs(vectors, threshold=1e-6):
    """Make each eigenvector positive at its leftmost significant point."""
    out = vectors.copy()
    for k in range(out.shape[1]):
        v = out[:, k]
        sig = np.nonzero(np.abs(v) > threshold * np.abs(v).max())[0]
        if v[sig[0]] < 0:
            out[:, k] = -v
    return out


def solve_and_diabatize(T, V, grid):
    """Diagonalize T + V and rotate the two lowest doublets to diabats.

    The eigenvector phases are fixed (positive at the leftmost
    significant grid point), after which (v0 + v1)/sqrt(2) is
    left-localized; this is verified through <R> and the labels swapped
    if the phase convention ever inverts.

    Returns
    -------
    VibrationalSolution
    """
    H = T + V
    try:
        energies, vectors = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"DVR eigensolver failed: {exc}") from None

    vecs4 = _fix_signs(vectors[:, :4])
    E = energies[:4]

    s = 1.0 / np.sqrt(2.0)
    U = np.array([[s,  s, 0., 0.],
                  [s, -s, 0., 0.],
                  [0., 0., s,  s],
                  [0., 0., s, -s]])

    # Verify left-localization of the nominal |L> column; swap if the
    # unstated global phase convention ever flips it.
    R_eig = vecs4.T @ (grid.points[:, None] * vecs4)
    for pair in ((0, 1), (2, 3)):
        col = U[:, pair[0]]
        r_expect = col @ R_eig @ col
        if r_expect > 0:
            U[:, pair[0]], U[:, pair[1]] = U[:, pair[1]].copy(), U[:, pair[0]].copy()

    return VibrationalSolution(
        energies=E, vectors=vecs4,
        Ebar0=0.5 * (E[0] + E[1]), Ebar1=0.5 * (E[2] + E[3]),
        Delta0=0.5 * (E[1] - E[0]), Delta1=0.5 * (E[3] - E[2]),
        U_diab=U, all_energies=energies,
    )


@dataclass(frozen=True)
class TruncatedOperators:
    """4x4 operators in the localized (diabatic) basis {L, R, L', R'}."""
    H_R: np.ndarray
    R_op: np.ndarray
    h_R: np.ndarray
    basis_label: str = "diabatic"


def truncated_operators(sol, grid):
    """Project H, R and the reactant Heaviside onto the diabatic subspace.

    The Heaviside assigns h = 1 strictly for R < 0 (and 0 at the R = 0
    grid point), so h + (1 - h) = 1 pointwise on the grid.
    """
    U = sol.U_diab
    vecs = sol.vectors
    H_R = U.T @ np.diag(sol.energies) @ U
    R_eig = vecs.T @ (grid.points[:, None] * vecs)
    h_grid = (grid.points < 0).astype(float)
    h_eig = vecs.T @ (h_grid[:, None] * vecs)
    R_op = U.T @ R_eig @ U
    h_R = U.T @ h_eig @ U
    return TruncatedOperators(H_R=0.5 * (H_R + H_R.T),
                              R_op=0.5 * (R_op + R_op.T),
                              h_R=0.5 * (h_R + h_R.T))


def build_molecule(params):
    """Grid + eigensolve + diabatize + truncate, in one call."""
    grid = DvrGrid.build(params.R_max, params.n_R)
    T, V = build_dvr_matrices(grid, params)
    sol = solve_and_diabatize(T, V, grid)
    return grid, sol, truncated_operators(sol, grid)
