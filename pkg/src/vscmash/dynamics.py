"""Trajectory-level dynamics: initialization, propagation, hop geometry.

Ehrenfest propagates the amplitudes in the working (diabatic) frame with
RK4 half-steps around a velocity-Verlet update of the bath; MASH runs in
the adiabatic frame via local diabatization, with deterministic
active-state selection (population argmax), impulsive energy-conserving
hops, momentum reversal on frustrated hops, and optional rejection of
hops whose scalar nonadiabatic coupling falls below a threshold.

Per-trajectory randomness comes from a counter-based Philox stream keyed
on (master seed, trajectory index), so results do not depend on how
trajectories are scheduled across workers.  The draw order inside one
trajectory is fixed: photon occupation, amplitude phases (MASH),
solvent Wigner sample, second-bath Wigner sample.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .baths import sample_wigner
from .dvr import NumericalError
from .model import assemble_energy

N_COUNTERS = 7
N_DIAG = 5
COUNTER_NAMES = ("attempts", "accepted", "frustrated", "eps_rejected",
                 "cross_photon", "photon_only", "undefined_direction")


def make_rng(master_seed, traj_index):
    """Counter-based per-trajectory RNG: a pure function of its arguments."""
    key = np.array([master_seed & 0xFFFFFFFFFFFFFFFF,
                    traj_index & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def mash_alpha_beta(n_states):
    """Multi-state mapping coefficients (alpha_N, beta_N).

    alpha_N = (N - 1)/(H_N - 1) with H_N the N-th harmonic number and
    beta_N = (1 - alpha_N)/N, so alpha + N beta = 1 and the population
    estimator alpha |c_m|^2 + beta is exact on focused initial states.
    """
    H = np.sum(1.0 / np.arange(1, n_states + 1))
    alpha = (n_states - 1) / (H - 1.0)
    return alpha, (1.0 - alpha) / n_states


def thermal_photon_probabilities(params):
    """Boltzmann weights over the retained Fock states."""
    E = params.omega_c * (np.arange(params.N_p) + 0.5)
    w = np.exp(-params.beta * (E - E[0]))
    return w / w.sum()


def init_quantum(model, method, rng):
    """Draw the initial amplitude vector in the working basis.

    The molecule starts in the left-well ground diabat; with a quantized
    cavity the photon occupation is drawn thermally.  Ehrenfest places
    the full weight on that product state.  MASH uses focused sampling:
    magnitude sqrt((1-beta)/alpha) on the initial state and
    sqrt(-beta/alpha) on every other state (beta < 0), each with an
    independent uniform phase, which makes any fixed sign convention on
    the minor amplitudes immaterial.
    """
    params = model.params
    ns = model.n_states
    if model.cavity_mode == "classical":
        idx0 = 0
    else:
        probs = thermal_photon_probabilities(params)
        N = int(np.searchsorted(np.cumsum(probs), rng.random()))
        N = min(N, params.N_p - 1)
        idx0 = 0 * params.N_p + N         # matter slow, photon fast

    if method == "ehrenfest":
        c_dia = np.zeros(ns, dtype=np.complex128)
        c_dia[idx0] = 1.0
    elif method == "mash":
        alpha, beta = mash_alpha_beta(ns)
        mag = np.full(ns, np.sqrt(-beta / alpha))
        mag[idx0] = np.sqrt((1.0 - beta) / alpha)
        phases = rng.random(ns)
        c_dia = mag * np.exp(2j * np.pi * phases)
    else:
        raise ValueError(f"unknown method {method!r}")

    if model.U_mh_ext is not None:
        return model.U_mh_ext.T @ c_dia
    return c_dia


@dataclass
class TrajectoryState:
    """Mutable single-trajectory state (buffers shared with the kernels)."""
    t: float
    q: np.ndarray
    p: np.ndarray
    c: np.ndarray                  # working frame (Ehrenfest) / adiabatic (MASH)
    basis: str
    active: int = -1               # MASH only
    pending: int = -1              # unresolved population inversion (MASH)
    V: np.ndarray = None           # adiabatic eigenvectors at current q
    E: np.ndarray = None           # tracked adiabatic energies (no bath scalar)
    counters: np.ndarray = field(default_factory=lambda: np.zeros(N_COUNTERS, np.int64))
    diag: np.ndarray = field(default_factory=lambda: np.zeros(N_DIAG))
    energy0: float = 0.0

    def populations(self):
        return np.abs(self.c) ** 2


def initialize_trajectory(model, method, rng):
    """Sample amplitudes and bath phase space; set up the working state."""
    c_work = init_quantum(model, method, rng)

    r_expect = float(np.real(np.conj(c_work) @ (model.R_ext @ c_work)))
    if model.cavity_mode == "classical":
        shift2 = r_expect
    else:
        shift2 = float(np.real(np.conj(c_work) @ (model.Qc_ext @ c_work)))

    s1 = sample_wigner(model.bath1, model.params.beta, r_expect, rng)
    s2 = sample_wigner(model.bath2, model.params.beta, shift2, rng)
    q = np.concatenate([s1.q, s2.q])
    p = np.concatenate([s1.p, s2.p])

    if method == "ehrenfest":
        return TrajectoryState(t=0.0, q=q, p=p, c=c_work, basis="diabatic")

    nb1 = model.bath1.n
    M0 = (model.H0ct
          - (model.bath1.couplings @ q[:nb1]) * model.O1
          - (model.bath2.couplings @ q[nb1:]) * model.O2)
    E0, V0 = np.linalg.eigh(M0)
    c_ad = V0.T @ c_work
    active = int(np.argmax(np.abs(c_ad) ** 2))
    state = TrajectoryState(t=0.0, q=q, p=p, c=c_ad, basis="adiabatic",
                            active=active, V=np.ascontiguousarray(V0),
                            E=np.ascontiguousarray(E0))
    state.energy0 = (0.5 * np.sum(p**2)
                     + 0.5 * np.sum(model.omegas()**2 * q**2)
                     + E0[active])
    return state


def _check_status(status, dt):
    if status == kernels.STATUS_OK:
        return
    if status == kernels.STATUS_NORM:
        raise NumericalError(
            f"quantum norm drifted by more than 1e-6 in one step at dt={dt}; "
            f"reduce the timestep")
    if status == kernels.STATUS_EIGH:
        raise NumericalError("adiabatic eigensolver failed to converge")
    raise NumericalError("non-finite amplitudes encountered")


def ehrenfest_step(state, model, dt, n_steps=1):
    """Advance an Ehrenfest state by n_steps timesteps (in place)."""
    dummy = np.empty(1)
    status = kernels.run_traj_ehrenfest(
        state.c, state.q, state.p, model.H0ct, model.O1, model.O2,
        model.bath1.couplings, model.bath1.omegas,
        model.bath2.couplings, model.bath2.omegas,
        model.h_ext, dt, n_steps, 0, dummy, state.diag[:1])
    _check_status(status, dt)
    state.t += n_steps * dt
    return state


def mash_step(state, model, dt, epsilon=0.0, n_steps=1):
    """Advance a MASH state by n_steps timesteps (in place)."""
    alpha, beta = mash_alpha_beta(model.n_states)
    dummy = np.empty(1)
    act = np.array([state.active, state.pending], dtype=np.int64)
    no_trace = np.empty((0, model.n_states))
    no_vec = np.empty(0)
    status = kernels.run_traj_mash(
        state.c, state.q, state.p, state.V, state.E, act,
        model.H0ct, model.O1, model.O2,
        model.bath1.couplings, model.bath1.omegas,
        model.bath2.couplings, model.bath2.omegas,
        model.h_ext, model.nphot_diag, model.fock_levels, alpha, beta,
        model.trace_h, epsilon, dt, n_steps, 0, dummy, state.counters,
        state.diag, 0, no_trace, no_vec, no_vec, no_vec)
    _check_status(status, dt)
    state.active = int(act[0])
    state.pending = int(act[1])
    state.t += n_steps * dt
    return state


@dataclass(frozen=True)
class HopContext:
    """Geometry of a candidate hop between adiabats a and b."""
    a: int
    b: int
    delta_ab: np.ndarray        # impulse direction over classical coordinates
    p_parallel: float           # mass-weighted momentum projected on delta
    barrier: float              # E_b - E_a
    d_an_scalar: float          # sum_j p_j d^j_{ab}, thresholded by epsilon


def compute_delta_ab(state, model, target=None):
    """Hop geometry from the current adiabatic state (MASH frame)."""
    if state.basis != "adiabatic":
        raise ValueError("hop geometry is defined in the adiabatic frame")
    pops = state.populations()
    a = state.active
    if target is None:
        order = np.argsort(pops)[::-1]
        target = int(order[0]) if order[0] != a else int(order[1])
    if target == a:
        return HopContext(a=a, b=a, delta_ab=np.zeros_like(state.q),
                          p_parallel=0.0, barrier=0.0, d_an_scalar=0.0)

    n = model.n_states
    nb1 = model.bath1.n
    g1, g2 = model.bath1.couplings, model.bath2.couplings
    pg1 = float(state.p[:nb1] @ g1)
    pg2 = float(state.p[nb1:] @ g2)
    work = np.empty(n)
    cols = [np.empty(n) for _ in range(4)]
    A1, A2, delta2, p_par, d_an = kernels._hop_geometry(
        state.V, state.E, state.c, model.O1, model.O2,
        float(g1 @ g1), float(g2 @ g2), pg1, pg2, a, int(target),
        work, cols[0], cols[1], cols[2], cols[3])
    delta = np.concatenate([-A1 * g1, -A2 * g2])
    return HopContext(a=a, b=int(target), delta_ab=delta, p_parallel=p_par,
                      barrier=float(state.E[target] - state.E[a]),
                      d_an_scalar=d_an)


@dataclass
class TrajectoryResult:
    status: int
    pops: np.ndarray
    counters: np.ndarray
    diag: np.ndarray
    active_final: int = -1
    trace: dict = None


def run_trajectory(model, method, master_seed, traj_index, dt, n_steps,
                   rec_every, epsilon=0.0, trace_every=0):
    """Sample and propagate one trajectory; return its population series."""
    rng = make_rng(master_seed, traj_index)
    state = initialize_trajectory(model, method, rng)
    n_rec = n_steps // rec_every + 1
    pops = np.empty(n_rec)

    if method == "ehrenfest":
        status = kernels.run_traj_ehrenfest(
            state.c, state.q, state.p, model.H0ct, model.O1, model.O2,
            model.bath1.couplings, model.bath1.omegas,
            model.bath2.couplings, model.bath2.omegas,
            model.h_ext, dt, n_steps, rec_every, pops, state.diag[:1])
        return TrajectoryResult(status=status, pops=pops,
                                counters=state.counters, diag=state.diag)

    alpha, beta = mash_alpha_beta(model.n_states)
    act = np.array([state.active, -1], dtype=np.int64)
    if trace_every > 0:
        n_tr = n_steps // trace_every + 1
        trace_E = np.empty((n_tr, model.n_states))
        trace_active = np.empty(n_tr)
        trace_dan = np.empty(n_tr)
        trace_nphot = np.empty(n_tr)
    else:
        trace_E = np.empty((0, model.n_states))
        trace_active = np.empty(0)
        trace_dan = np.empty(0)
        trace_nphot = np.empty(0)

    status = kernels.run_traj_mash(
        state.c, state.q, state.p, state.V, state.E, act,
        model.H0ct, model.O1, model.O2,
        model.bath1.couplings, model.bath1.omegas,
        model.bath2.couplings, model.bath2.omegas,
        model.h_ext, model.nphot_diag, model.fock_levels, alpha, beta,
        model.trace_h, epsilon, dt, n_steps, rec_every, pops, state.counters,
        state.diag, trace_every, trace_E, trace_active, trace_dan, trace_nphot)

    trace = None
    if trace_every > 0:
        trace = {"E": trace_E, "active": trace_active,
                 "d_an": trace_dan, "n_photon": trace_nphot,
                 "times": np.arange(trace_E.shape[0]) * trace_every * dt}
    return TrajectoryResult(status=status, pops=pops, counters=state.counters,
                            diag=state.diag, active_final=int(act[0]), trace=trace)
