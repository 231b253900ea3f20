"""Assembly of the full mixed quantum-classical energy model.

Combines the truncated molecular subsystem (optionally extended by the
quantized cavity mode) with the two discretized baths into the flat
array bundle the trajectory kernels consume:

    E(q) = H_sys + sum_baths [ 1/2 w_i^2 q_i^2 I - g_i q_i O + (g_i^2 / 2 w_i^2) O^2 ]

with O = R for the solvent (and for the effective bath of the
classical-cavity variant) and O = Q_c for the cavity-loss bath of the
quantized variants.  The counterterms sum to lambda~ O^2 exactly by
construction of the discretization.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import baths as baths_mod
from .cavity import build_fock_operators, build_pf_bare, build_pf_polaron
from .config import ModelParams
from .dvr import build_molecule


@lru_cache(maxsize=8)
def _molecule_cached(M, omega_b, E_b, R_max, n_R):
    params = ModelParams(
        M=M, omega_b=omega_b, E_b=E_b, gamma_s=1.0, lambda_s=1.0, Gamma_s=1.0,
        gamma_c=1.0, lambda_c=1.0, tau_c=1.0, beta=1.0, omega_c=1.0, eta_c=0.0,
        R_max=R_max, n_R=n_R)
    return build_molecule(params)


def molecule_for(params):
    """Grid/eigensolution/truncated operators, cached on the PES inputs."""
    return _molecule_cached(params.M, params.omega_b, params.E_b,
                            params.R_max, params.n_R)


@dataclass(frozen=True)
class EnergyModel:
    """Immutable model bundle shared read-only by all trajectories."""
    params: ModelParams
    cavity_mode: str
    n_states: int
    H_sys: np.ndarray            # quantum subsystem Hamiltonian
    H0ct: np.ndarray             # H_sys + both counterterms
    O1: np.ndarray               # solvent-coupled operator
    O2: np.ndarray               # second-bath-coupled operator
    bath1: baths_mod.BathModes
    bath2: baths_mod.BathModes
    h_ext: np.ndarray            # reactant projector, working basis
    R_ext: np.ndarray
    Qc_ext: np.ndarray = None            # None for the classical variant
    U_mh_ext: np.ndarray = None          # diabatic -> working rotation (polaron)
    nphot_diag: np.ndarray = None        # diagonal of I (x) N, working basis
    basis_label: str = "diabatic"
    subsystem: object = field(default=None, repr=False)
    molecule: object = field(default=None, repr=False)

    @property
    def n_bath(self):
        return self.bath1.n + self.bath2.n

    @property
    def fock_levels(self):
        """Fock states per matter state in the working basis (1 if classical)."""
        return 1 if self.cavity_mode == "classical" else self.params.N_p

    @property
    def trace_h(self):
        return float(np.trace(self.h_ext))

    def omegas(self):
        return np.concatenate([self.bath1.omegas, self.bath2.omegas])

    def couplings(self):
        return np.concatenate([self.bath1.couplings, self.bath2.couplings])


def build_energy_model(params, cavity_mode):
    """Construct the EnergyModel for one (omega_c, eta_c) point.

    cavity_mode: 'classical' (4 states, effective bath on R),
    'quantum' (4 N_p states, polaron-transformed, loss bath on Q_c) or
    'quantum-bare' (same without the polaron transform).
    """
    grid, sol, trunc = molecule_for(params)

    solvent = baths_mod.discretize(
        baths_mod.DrudeLorentz(params.lambda_s, params.gamma_s, omega_max_factor=10.0),
        params.N_B, which_operator="R")

    if cavity_mode == "classical":
        eff = baths_mod.discretize(
            baths_mod.effective_density(params), params.N_B, which_operator="R")
        H_sys = trunc.H_R
        O1 = trunc.R_op
        O2 = trunc.R_op
        h_ext = trunc.h_R
        R_ext = trunc.R_op
        Qc_ext = None
        U_mh_ext = None
        nphot = np.zeros(4)
        basis = "diabatic"
        bath2 = eff
        subsystem = trunc
    elif cavity_mode in ("quantum", "quantum-bare"):
        fock = build_fock_operators(params.omega_c, params.N_p)
        if cavity_mode == "quantum":
            pf = build_pf_polaron(trunc, fock, params.eta_c)
            U_mh_ext = np.kron(pf.U_MH, np.eye(params.N_p))
        else:
            pf = build_pf_bare(trunc, fock, params.eta_c)
            U_mh_ext = None
        loss = baths_mod.discretize(
            baths_mod.DrudeLorentz(params.lambda_c, params.gamma_c, omega_max_factor=3.0),
            params.N_B, which_operator="Q_c")
        H_sys = pf.H_PF
        O1 = pf.R_ext
        O2 = pf.Qc_ext
        h_ext = pf.h_R_ext
        R_ext = pf.R_ext
        Qc_ext = pf.Qc_ext
        nphot = np.kron(np.ones(4), np.arange(params.N_p, dtype=float))
        basis = pf.basis_label
        bath2 = loss
        subsystem = pf
    else:
        raise ValueError(f"unknown cavity_mode {cavity_mode!r}")

    H0ct = (H_sys
            + solvent.lambda_tilde * (O1 @ O1)
            + bath2.lambda_tilde * (O2 @ O2))

    return EnergyModel(
        params=params, cavity_mode=cavity_mode, n_states=H_sys.shape[0],
        H_sys=np.ascontiguousarray(H_sys), H0ct=np.ascontiguousarray(H0ct),
        O1=np.ascontiguousarray(O1), O2=np.ascontiguousarray(O2),
        bath1=solvent, bath2=bath2,
        h_ext=np.ascontiguousarray(h_ext), R_ext=np.ascontiguousarray(R_ext),
        Qc_ext=None if Qc_ext is None else np.ascontiguousarray(Qc_ext),
        U_mh_ext=U_mh_ext, nphot_diag=nphot, basis_label=basis,
        subsystem=subsystem, molecule=(grid, sol, trunc),
    )


def assemble_energy(model, q):
    """Full energy matrix E(q), including the scalar bath potential."""
    q = np.asarray(q, dtype=float)
    nb1 = model.bath1.n
    s1 = model.bath1.couplings @ q[:nb1]
    s2 = model.bath2.couplings @ q[nb1:]
    v_cl = 0.5 * (np.sum(model.bath1.omegas**2 * q[:nb1] ** 2)
                  + np.sum(model.bath2.omegas**2 * q[nb1:] ** 2))
    return (model.H0ct - s1 * model.O1 - s2 * model.O2
            + v_cl * np.eye(model.n_states))


def energy_gradient(model, q, j):
    """d E(q) / d q_j as a constant-plus-diagonal matrix."""
    nb1 = model.bath1.n
    if j < nb1:
        w, g, O = model.bath1.omegas[j], model.bath1.couplings[j], model.O1
    else:
        w, g, O = (model.bath2.omegas[j - nb1], model.bath2.couplings[j - nb1],
                   model.O2)
    return w**2 * q[j] * np.eye(model.n_states) - g * O
