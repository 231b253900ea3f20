"""Light-matter quantum subsystem: Fock-quantized cavity mode.

Assembles the coupled matter-photon Hamiltonian either in the bare
product basis (4 matter states x N_p Fock states) or after the two-step
Mulliken-Hush + polaron transformation that dresses the photons with the
matter polarization and accelerates Fock-truncation convergence.

Kronecker ordering is fixed everywhere in this package: matter index
slow, photon index fast, i.e. joint index  i = nu * N_p + N  and product
operators are np.kron(matter, photon).
"""

from dataclasses import dataclass, field

import numpy as np

from .dvr import NumericalError
from .units import AU_TO_WAVENUMBER


@dataclass(frozen=True)
class FockOperators:
    """Ladder matrices and derived photon operators for one cavity mode."""
    omega_c: float
    N_p: int
    a_dag: np.ndarray      # creation: a_dag |N> = sqrt(N+1) |N+1>
    a: np.ndarray          # annihilation, equals a_dag.T
    H_p: np.ndarray        # diagonal, omega_c (N + 1/2)
    Q_c: np.ndarray        # (a + a_dag)/sqrt(2 omega_c)
    P_c_im: np.ndarray     # real antisymmetric K with P_c = i K


def build_fock_operators(omega_c, N_p):
    """Ladder/number/displacement matrices in a truncated Fock basis.

    The truncation leaves [a, a_dag] equal to the identity on the first
    N_p - 1 diagonal entries only; the last entry is -(N_p - 1).
    """
    if N_p < 1:
        raise ValueError(f"N_p must be >= 1, got {N_p}")
    a_dag = np.zeros((N_p, N_p))
    for n in range(1, N_p):
        a_dag[n, n - 1] = np.sqrt(n)
    a = a_dag.T.copy()
    H_p = np.diag(omega_c * (np.arange(N_p) + 0.5))
    Q_c = (a + a_dag) / np.sqrt(2.0 * omega_c)
    P_c_im = np.sqrt(omega_c / 2.0) * (a_dag - a)
    return FockOperators(omega_c=omega_c, N_p=N_p, a_dag=a_dag, a=a,
                         H_p=H_p, Q_c=Q_c, P_c_im=P_c_im)


@dataclass(frozen=True)
class PFSystem:
    """Quantum subsystem on the (4 * N_p)-dimensional product space.

    ``basis_label`` records the working basis; all extended operators
    use the fixed matter-slow/photon-fast ordering.
    """
    H_PF: np.ndarray
    R_ext: np.ndarray
    Qc_ext: np.ndarray
    h_R_ext: np.ndarray
    basis_label: str
    omega_c: float
    eta_c: float
    N_p: int
    U_MH: np.ndarray = None            # 4x4 diabatic -> MH rotation
    R_mh: np.ndarray = None            # eigenvalues of R_op
    S: np.ndarray = field(default=None, repr=False)  # overlaps S[nu,mu,N,M]

    @property
    def n_states(self):
        return self.H_PF.shape[0]


def build_pf_bare(trunc, fock, eta_c, H_extra=None):
    """Pauli-Fierz Hamiltonian in the bare diabatic x Fock basis.

    H = H_R (x) I_p + I_R (x) H_p + w_c eta_c R (x) (a + a_dag)
        + w_c eta_c^2 R^2 (x) I_p

    ``H_extra`` optionally adds a matter-space 4x4 term (used for
    bath-dressed spectra at a frozen classical configuration).
    """
    HR = trunc.H_R if H_extra is None else trunc.H_R + H_extra
    R = trunc.R_op
    Np = fock.N_p
    wc = fock.omega_c
    I4 = np.eye(HR.shape[0])
    Ip = np.eye(Np)
    H = np.kron(HR, Ip) + np.kron(I4, fock.H_p)
    H += wc * eta_c * np.kron(R, fock.a + fock.a_dag)
    H += wc * eta_c**2 * np.kron(R @ R, Ip)
    return PFSystem(
        H_PF=0.5 * (H + H.T),
        R_ext=np.kron(R, Ip),
        Qc_ext=np.kron(I4, fock.Q_c),
        h_R_ext=np.kron(trunc.h_R, Ip),
        basis_label="diabatic-fock",
        omega_c=wc, eta_c=eta_c, N_p=Np,
    )


def hermite_functions(x, n_max):
    """Normalized harmonic-oscillator functions phi_0..phi_{n_max-1}.

    Upward recurrence on the *normalized* functions, so there is no
    factorial to overflow; stable to n of order 10^3.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max, x.size))
    out[0] = np.pi**-0.25 * np.exp(-0.5 * x * x)
    if n_max > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, n_max - 1):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1.0)) * out[n - 1]
    return out


def photon_wavefunction(q, omega_c, N):
    """psi_N(q) for the cavity oscillator (mass 1, frequency omega_c)."""
    return omega_c**0.25 * hermite_functions(np.sqrt(omega_c) * np.asarray(q, float),
                                             N + 1)[N]


def photon_overlaps(displacements, omega_c, N_p, n_q=2001, check_tol=1e-8):
    """Franck-Condon overlap tensor S[nu, mu, N, M] by trapezoidal rule.

    S = integral dq psi_N(q - q_nu) psi_M(q - q_mu).  The quadrature
    range adapts to cover every displacement plus the classical turning
    point of the highest retained Fock state; convergence is verified by
    halving the grid spacing.
    """
    qn = np.asarray(displacements, dtype=float)
    half = np.abs(qn).max() + (np.sqrt(2.0 * N_p + 1.0) + 8.0) / np.sqrt(omega_c)

    def overlaps(npts):
        q = np.linspace(-half, half, npts)
        dq = q[1] - q[0]
        psis = np.empty((qn.size, N_p, npts))
        for nu in range(qn.size):
            psis[nu] = omega_c**0.25 * hermite_functions(np.sqrt(omega_c) * (q - qn[nu]), N_p)
        # trapezoid = rectangle rule minus half the end points (negligible tails)
        S = np.einsum("ank,bmk->abnm", psis, psis) * dq
        S -= 0.5 * dq * (np.einsum("an,bm->abnm", psis[:, :, 0], psis[:, :, 0])
                         + np.einsum("an,bm->abnm", psis[:, :, -1], psis[:, :, -1]))
        return S

    S = overlaps(n_q)
    S_fine = overlaps(2 * n_q - 1)
    err = np.abs(S_fine - S).max()
    if err > check_tol:
        raise NumericalError(
            f"photon overlap quadrature not converged: halving the spacing "
            f"changes S by {err:.3e} (> {check_tol:.1e}); increase n_q")
    return S_fine


def build_pf_polaron(trunc, fock, eta_c, H_extra=None, n_q=2001):
    """Polaron-transformed Pauli-Fierz Hamiltonian (MH x polarized Fock).

    Steps: (1) rotate the matter operators to the Mulliken-Hush basis
    that diagonalizes R; (2) displace the photon coordinate per MH state
    by q_nu = -eta_c R_nu sqrt(2/w_c); (3) modulate the matter matrix
    elements by the photon overlap integrals; (4) add the free-photon
    ladder.  The displacement also translates the photon position
    operator: Q_c' = I (x) Q_c + eta_c sqrt(2/w_c) R' (x) I_p.
    """
    wc = fock.omega_c
    Np = fock.N_p
    R_mh, U_MH = np.linalg.eigh(trunc.R_op)
    HR = trunc.H_R if H_extra is None else trunc.H_R + H_extra
    HR_mh = U_MH.T @ HR @ U_MH
    h_mh = U_MH.T @ trunc.h_R @ U_MH

    qn = -eta_c * R_mh * np.sqrt(2.0 / wc)
    S = photon_overlaps(qn, wc, Np, n_q=n_q)

    n_m = R_mh.size
    H = np.zeros((n_m * Np, n_m * Np))
    for nu in range(n_m):
        for mu in range(n_m):
            H[nu * Np:(nu + 1) * Np, mu * Np:(mu + 1) * Np] = HR_mh[nu, mu] * S[nu, mu]
    H += np.kron(np.eye(n_m), fock.H_p)

    Ip = np.eye(Np)
    R_ext = np.kron(np.diag(R_mh), Ip)      # R is diagonal in MH, commutes
    Qc_ext = np.kron(np.eye(n_m), fock.Q_c) + eta_c * np.sqrt(2.0 / wc) * R_ext
    return PFSystem(
        H_PF=0.5 * (H + H.T),
        R_ext=R_ext,
        Qc_ext=Qc_ext,
        h_R_ext=np.kron(h_mh, Ip),
        basis_label="mh-polaron-fock",
        omega_c=wc, eta_c=eta_c, N_p=Np,
        U_MH=U_MH, R_mh=R_mh, S=S,
    )


def pf_spectrum(trunc, omega_c, eta_c, N_p, polaron=False, H_extra=None):
    """Sorted eigenvalues of the quantum subsystem at a given truncation."""
    fock = build_fock_operators(omega_c, N_p)
    if polaron:
        sys = build_pf_polaron(trunc, fock, eta_c, H_extra=H_extra)
    else:
        sys = build_pf_bare(trunc, fock, eta_c, H_extra=H_extra)
    return np.linalg.eigvalsh(sys.H_PF)


def convergence_table(trunc, omega_c, eta_c, N_p_values, n_levels=8, H_extra=None):
    """Rows (N_p, index, energy_cm1, method) for bare and polaron spectra."""
    rows = []
    for Np in N_p_values:
        for polaron, tag in ((False, "bare"), (True, "polaron")):
            ev = pf_spectrum(trunc, omega_c, eta_c, Np, polaron=polaron, H_extra=H_extra)
            for k, e in enumerate(ev[:n_levels]):
                rows.append((Np, k, e * AU_TO_WAVENUMBER, tag))
    return rows


def min_Np_for_accuracy(trunc, omega_c, eta_c, tol_cm1=1.0, n_levels=8,
                        polaron=False, N_p_max=64, reference=None, H_extra=None):
    """Smallest N_p whose lowest ``n_levels`` eigenvalues are within tol.

    ``reference`` defaults to a heavily over-converged bare spectrum.
    Returns None if no N_p <= N_p_max reaches the tolerance.
    """
    if reference is None:
        reference = pf_spectrum(trunc, omega_c, eta_c, max(4 * N_p_max, 120),
                                polaron=False, H_extra=H_extra)[:n_levels]
    tol = tol_cm1 / AU_TO_WAVENUMBER
    Np = max(2, int(np.ceil(n_levels / trunc.H_R.shape[0])))
    while Np <= N_p_max:
        ev = pf_spectrum(trunc, omega_c, eta_c, Np, polaron=polaron, H_extra=H_extra)
        if ev.size >= n_levels and np.abs(ev[:n_levels] - reference).max() < tol:
            return Np
        Np += 1
    return None
