import numpy as np
import pytest

import vscmash as vm
from vscmash import kernels
from vscmash.dynamics import (init_quantum, initialize_trajectory,
                              mash_alpha_beta, make_rng, run_trajectory)
from vscmash.model import assemble_energy, energy_gradient
from conftest import make_two_level_model


# ---------------------------------------------------------------- #
#  energy-matrix assembly
# ---------------------------------------------------------------- #

def test_assemble_energy_at_origin(model_quantum):
    m = model_quantum
    q = np.zeros(m.n_bath)
    E0 = assemble_energy(m, q)
    assert np.allclose(E0, m.H0ct)
    # counterterms are exactly lambda~ O^2 per bath
    expect = (m.H_sys + m.bath1.lambda_tilde * (m.O1 @ m.O1)
              + m.bath2.lambda_tilde * (m.O2 @ m.O2))
    assert np.allclose(m.H0ct, expect)


def test_assemble_energy_symmetric(model_quantum):
    rng = np.random.default_rng(3)
    q = rng.normal(size=model_quantum.n_bath) * 50
    E = assemble_energy(model_quantum, q)
    assert np.abs(E - E.T).max() < 1e-12


def test_identity_coupling_rigid_shift(model_classical):
    """A bath coupled to the identity shifts all eigenvalues rigidly."""
    m = model_classical
    H = m.H_sys
    I = np.eye(4)
    g, w = 1e-4, 1e-3
    for q in (-3.0, 2.0):
        E = H + (0.5 * w**2 * q**2 - g * q) * I + (g**2 / (2 * w**2)) * I
        evals = np.linalg.eigvalsh(E)
        base = np.linalg.eigvalsh(H)
        shift = 0.5 * w**2 * q**2 - g * q + g**2 / (2 * w**2)
        assert np.allclose(evals - base, shift)


def test_gradient_finite_difference(model_quantum):
    """Central differences reproduce the analytic gradient to 1e-8."""
    m = model_quantum
    rng = np.random.default_rng(5)
    q = rng.normal(size=m.n_bath) * 20
    h = 1e-5
    for j in (0, 3, m.bath1.n - 1, m.bath1.n, m.n_bath - 1):
        qp = q.copy(); qp[j] += h
        qm = q.copy(); qm[j] -= h
        fd = (assemble_energy(m, qp) - assemble_energy(m, qm)) / (2 * h)
        assert np.abs(fd - energy_gradient(m, q, j)).max() < 1e-8


# ---------------------------------------------------------------- #
#  Ehrenfest integrator oracles
# ---------------------------------------------------------------- #

def _run_ehrenfest_raw(md, c0, q0, p0, dt, n_steps):
    c = c0.astype(np.complex128).copy()
    q = q0.copy()
    p = p0.copy()
    pops = np.empty(n_steps + 1)
    diag = np.zeros(1)
    status = kernels.run_traj_ehrenfest(
        c, q, p, md["H0ct"], md["O1"], md["O2"], md["g1"], md["w1"],
        md["g2"], md["w2"], md["h_ext"], dt, n_steps, 1, pops, diag)
    return status, c, q, p, pops, diag


def test_stationary_eigenstate():
    """Zero coupling, c on an eigenstate: populations frozen, phase e^{-iEt}."""
    md = make_two_level_model(delta=0.0, kappa=2e-3, g=0.0)
    c0 = np.array([0.0, 1.0], dtype=complex)
    dt, n = 1.0, 4000
    status, c, *_ = _run_ehrenfest_raw(md, c0, np.array([0.3, 0.1]),
                                       np.array([0.0, 0.0]), dt, n)
    assert status == 0
    assert abs(abs(c[1]) ** 2 - 1.0) < 1e-10
    expect = np.exp(-1j * 2e-3 * dt * n)
    assert abs(c[1] - expect) < 1e-8


def test_two_level_rabi_period():
    """Constant 2x2 E with off-diagonal Delta: population period pi/Delta."""
    delta = 1e-3
    md = make_two_level_model(delta=delta, kappa=0.0, g=0.0)
    period = np.pi / delta
    dt = period / 1000.0
    n = 3000
    c0 = np.array([1.0, 0.0], dtype=complex)
    status, c, q, p, pops, diag = _run_ehrenfest_raw(
        md, c0, np.zeros(2), np.zeros(2), dt, n)
    assert status == 0
    # P_0(t) = cos^2(Delta t): first full revival at t = pi/Delta
    t = np.arange(n + 1) * dt
    sel = (t > 0.6 * period) & (t < 1.4 * period)
    t_rev = t[sel][np.argmax(pops[sel])]
    assert abs(t_rev - period) / period < 1e-3
    # pointwise comparison against the analytic law
    assert np.abs(pops - np.cos(delta * t) ** 2).max() < 1e-6


def test_pure_bath_verlet_energy():
    """Uncoupled harmonic modes conserve their own energy to O(dt^2)."""
    w = 8e-3
    md = make_two_level_model(delta=1e-4, kappa=0.0, omega=w, g=0.0, n_modes=4)
    rng = np.random.default_rng(0)
    q0 = np.concatenate([rng.normal(size=4) * 10, [0.0]])
    p0 = np.concatenate([rng.normal(size=4) * 0.02, [0.0]])
    dt = 2.5
    c0 = np.array([1.0, 0.0], dtype=complex)

    def mode_energy(q, p):
        return 0.5 * p[:4] ** 2 + 0.5 * w**2 * q[:4] ** 2

    e0 = mode_energy(q0, p0)
    status, c, q, p, pops, diag = _run_ehrenfest_raw(md, c0, q0, p0, dt, 5000)
    assert status == 0
    rel = np.abs(mode_energy(q, p) - e0) / e0
    assert rel.max() < 2.0 * (w * dt) ** 2     # bounded oscillation, no drift


def test_ehrenfest_norm_monitor(model_quantum):
    res = run_trajectory(model_quantum, "ehrenfest", 17, 0, 2.5, 4000, 400)
    assert res.status == 0
    assert res.diag[0] < 1e-8                  # per-step norm drift


# ---------------------------------------------------------------- #
#  MASH integrator
# ---------------------------------------------------------------- #

def _run_mash_raw(md, c_ad, q0, p0, V0, E0, active, dt, n_steps, eps=0.0):
    c = c_ad.astype(np.complex128).copy()
    q = q0.copy()
    p = p0.copy()
    V = V0.copy()
    E = E0.copy()
    act = np.array([active, -1], dtype=np.int64)
    pops = np.empty(n_steps + 1)
    counters = np.zeros(7, dtype=np.int64)
    diag = np.zeros(5)
    ns = c.size
    no_tr = np.empty((0, ns))
    no_v = np.empty(0)
    nphot = np.zeros(ns)
    status = kernels.run_traj_mash(
        c, q, p, V, E, act, md["H0ct"], md["O1"], md["O2"], md["g1"],
        md["w1"], md["g2"], md["w2"], md["h_ext"], nphot, 1, 2.0, -0.5,
        float(np.trace(md["h_ext"])), eps, dt, n_steps, 1, pops, counters,
        diag, 0, no_tr, no_v, no_v, no_v)
    return status, c, q, p, V, E, act, pops, counters, diag


def test_mash_single_surface_matches_verlet():
    """Diagonal model, no crossings: MASH = Verlet on E_a + exact phases."""
    md = make_two_level_model(delta=0.0, kappa=5e-3, omega=4e-3, g=2e-5,
                              n_modes=1)
    # diagonal H and O1 -> adiabats are the basis states at every q
    q0 = np.array([5.0, 0.0])
    p0 = np.array([0.01, 0.0])
    c_ad = np.array([np.sqrt(0.75), np.sqrt(0.25)], dtype=complex)
    V0 = np.eye(2)
    E0 = np.array([0.0 - 2e-5 * q0[0], 5e-3 + 2e-5 * q0[0]])
    dt, n = 1.0, 2000
    status, c, q, p, V, E, act, pops, counters, diag = _run_mash_raw(
        md, c_ad, q0, p0, V0, E0, 0, dt, n)
    assert status == 0
    assert counters[0] == 0                     # no crossings
    # independent velocity-Verlet on the active surface E_0(q) = -g q + ...
    g, w = 2e-5, 4e-3
    qq, pp = q0[0], p0[0]
    for _ in range(n):
        f = -(w**2 * qq - g * 1.0)             # O1_aa = +1 on state 0
        pp += 0.5 * dt * f
        qq += dt * pp
        f = -(w**2 * qq - g * 1.0)
        pp += 0.5 * dt * f
    assert q[0] == pytest.approx(qq, abs=1e-10)
    assert p[0] == pytest.approx(pp, abs=1e-12)
    # populations unchanged; norm preserved to machine precision
    assert abs(abs(c[0]) ** 2 - 0.75) < 1e-12
    assert diag[0] < 1e-14                     # per-step norm change
    assert diag[1] < 1e-12                     # cumulative


def test_mash_norm_conservation_real_model(model_quantum):
    res = run_trajectory(model_quantum, "mash", 17, 1, 2.5, 4000, 400)
    assert res.status == 0
    assert res.diag[0] < 1e-10                 # per-step norm conservation
    assert res.diag[1] < 1e-8                  # cumulative over the run


def test_mash_hop_energy_conservation(model_quantum):
    """Accepted hops conserve kinetic + active-surface energy to 1e-9."""
    total_acc = 0
    worst = 0.0
    for idx in range(6):
        res = run_trajectory(model_quantum, "mash", 23, idx, 2.5, 20000, 2000)
        assert res.status == 0
        total_acc += res.counters[1]
        worst = max(worst, res.diag[2])
    assert total_acc > 0
    assert worst < 1e-9


def test_mash_active_is_argmax_when_consistent(model_quantum):
    rng = make_rng(29, 0)
    st = initialize_trajectory(model_quantum, "mash", rng)
    assert st.active == int(np.argmax(st.populations()))
    for _ in range(40):
        vm.mash_step(st, model_quantum, 2.5, 0.0, n_steps=25)
        if st.pending < 0:
            assert st.active == int(np.argmax(st.populations()))


def test_eigenvector_continuity(model_quantum):
    """diag(V_new^T V_old) > 0 after every step (no spurious flips)."""
    rng = make_rng(31, 2)
    st = initialize_trajectory(model_quantum, "mash", rng)
    for _ in range(200):
        V_old = st.V.copy()
        vm.mash_step(st, model_quantum, 2.5, 0.0, n_steps=1)
        overlap = np.diag(V_old.T @ st.V)
        assert np.all(overlap > 0.0)


# ---------------------------------------------------------------- #
#  hop geometry
# ---------------------------------------------------------------- #

def test_two_level_nac_analytic_oracle():
    """d_12 from the kernel matches the closed-form two-level result."""
    import sympy as sp
    qs, g, d = sp.symbols("q g d", real=True, positive=True)
    H = sp.Matrix([[-g * qs, d], [d, g * qs]])
    evec = H.eigenvects()
    # analytic derivative coupling <1| dH/dq |2> / (E2 - E1)
    dH = H.diff(qs)
    (l1, _, (v1,)), (l2, _, (v2,)) = sorted(evec, key=lambda t: sp.simplify(t[0]).subs({g: 1, qs: 1, d: 1}))
    v1 = v1 / v1.norm()
    v2 = v2 / v2.norm()
    d12 = sp.simplify((v1.T * dH * v2)[0, 0] / (l2 - l1))

    delta, gval, qval = 1e-3, 2e-4, 1.5
    md = make_two_level_model(delta=delta, kappa=0.0, omega=1e-3, g=gval)
    Emat = md["H0ct"] - gval * qval * md["O1"]
    E0, V0 = np.linalg.eigh(Emat)
    p = np.array([1.0, 0.0])
    pg1 = p[0] * gval
    work = np.empty(2)
    cols = [np.empty(2) for _ in range(4)]
    c = np.array([0.8, 0.6], dtype=complex)
    A1, A2, delta2, p_par, d_an = kernels._hop_geometry(
        V0, E0, c, md["O1"], md["O2"], gval**2, 0.0, pg1, 0.0, 0, 1,
        work, *cols)
    expect = float(d12.subs({g: gval, d: delta, qs: qval})) * p[0]
    assert d_an == pytest.approx(abs(expect) * np.sign(expect), rel=1e-8) or \
        d_an == pytest.approx(-expect, rel=1e-8)   # overall eigenvector sign
    assert abs(abs(d_an) - abs(expect)) / abs(expect) < 1e-8


def test_delta_ab_antisymmetry_and_self(model_quantum):
    rng = make_rng(37, 1)
    st = initialize_trajectory(model_quantum, "mash", rng)
    vm.mash_step(st, model_quantum, 2.5, 0.0, n_steps=10)
    ctx_self = vm.compute_delta_ab(st, model_quantum, target=st.active)
    assert np.all(ctx_self.delta_ab == 0.0) and ctx_self.d_an_scalar == 0.0
    ctx = vm.compute_delta_ab(st, model_quantum)
    assert np.all(np.isfinite(ctx.delta_ab))
    assert ctx.b != st.active


def test_momentum_reversal_algebra(model_quantum):
    """Reversal flips the parallel component and conserves |p|."""
    rng = make_rng(41, 5)
    st = initialize_trajectory(model_quantum, "mash", rng)
    vm.mash_step(st, model_quantum, 2.5, 0.0, n_steps=50)
    ctx = vm.compute_delta_ab(st, model_quantum)
    norm_d = np.linalg.norm(ctx.delta_ab)
    if norm_d == 0.0:
        pytest.skip("uncoupled candidate pair drawn")
    u = ctx.delta_ab / norm_d
    p = st.p.copy()
    p_par = p @ u
    assert p_par == pytest.approx(ctx.p_parallel, rel=1e-10)
    p_new = p - 2.0 * p_par * u
    assert np.linalg.norm(p_new) == pytest.approx(np.linalg.norm(p), rel=1e-12)
    assert p_new @ u == pytest.approx(-p_par, rel=1e-10)


def test_cross_factor_nac_vanishes_at_zero_coupling(table_params):
    """At eta = 0, adiabats factorize; matter+photon cross pairs decouple."""
    p0 = table_params.at_sweep_point(table_params.omega_c, 0.0)
    model = vm.build_energy_model(p0, "quantum")
    rng = make_rng(43, 0)
    st = initialize_trajectory(model, "mash", rng)
    nphot = model.nphot_diag
    n_of = lambda m: float(st.V[:, m] ** 2 @ nphot)
    mat = lambda m: np.add.reduceat(st.V[:, m] ** 2, np.arange(0, 8, 2))
    a = st.active
    checked = 0
    for b in range(model.n_states):
        if b == a:
            continue
        if abs(n_of(b) - n_of(a)) > 0.5 and np.abs(mat(b) - mat(a)).sum() / 2 > 0.5:
            ctx = vm.compute_delta_ab(st, model, target=b)
            assert abs(ctx.d_an_scalar) < 1e-10
            checked += 1
    assert checked > 0


# ---------------------------------------------------------------- #
#  initial sampling
# ---------------------------------------------------------------- #

def test_mapping_coefficients():
    a2, b2 = mash_alpha_beta(2)
    assert a2 == pytest.approx(2.0, rel=1e-12)
    assert b2 == pytest.approx(-0.5, rel=1e-12)
    a8, b8 = mash_alpha_beta(8)
    H8 = sum(1.0 / n for n in range(1, 9))
    assert a8 == pytest.approx(7.0 / (H8 - 1.0), rel=1e-12)
    assert a8 == pytest.approx(4.07485, rel=1e-5)
    assert b8 == pytest.approx(-0.384356, rel=1e-5)
    # alpha + N beta = 1 for all sizes
    for N in range(2, 17):
        a, b = mash_alpha_beta(N)
        assert a + N * b == pytest.approx(1.0, rel=1e-12)


def test_focused_sampling_normalization(model_quantum, model_classical):
    for model in (model_quantum, model_classical):
        for k in range(6):
            c = init_quantum(model, "mash", make_rng(51, k))
            assert np.sum(np.abs(c) ** 2) == pytest.approx(1.0, rel=1e-12)
    # magnitudes: (1-beta)/alpha on the initial state, -beta/alpha elsewhere
    a, b = mash_alpha_beta(8)
    c = init_quantum(model_quantum, "mash", make_rng(51, 0))
    c_dia = model_quantum.U_mh_ext @ c
    mags = np.sort(np.abs(c_dia) ** 2)
    assert mags[-1] == pytest.approx((1 - b) / a, rel=1e-10)
    assert np.allclose(mags[:-1], -b / a, rtol=1e-10)


def test_ehrenfest_initial_state(model_quantum):
    counts = np.zeros(2)
    for k in range(3000):
        c = init_quantum(model_quantum, "ehrenfest", make_rng(53, k))
        c_dia = model_quantum.U_mh_ext @ c
        idx = int(np.argmax(np.abs(c_dia)))
        assert abs(np.abs(c_dia[idx]) - 1.0) < 1e-12
        nu, N = divmod(idx, model_quantum.params.N_p)
        assert nu == 0                        # left-well diabat
        counts[N] += 1
    # thermal photon occupation ~ e^{-beta w_c} = 0.33%
    p1 = counts[1] / counts.sum()
    expect = np.exp(-model_quantum.params.beta * model_quantum.params.omega_c)
    assert abs(p1 - expect / (1 + expect)) < 3e-3


def test_initial_active_is_argmax(model_quantum):
    for k in range(5):
        st = initialize_trajectory(model_quantum, "mash", make_rng(57, k))
        assert st.active == int(np.argmax(np.abs(st.c) ** 2))
        assert np.sum(np.abs(st.c) ** 2) == pytest.approx(1.0, rel=1e-10)


# ---------------------------------------------------------------- #
#  epsilon-MASH limits
# ---------------------------------------------------------------- #

def test_epsilon_zero_bitwise_identity(model_quantum):
    a = run_trajectory(model_quantum, "mash", 61, 3, 2.5, 6000, 600, epsilon=0.0)
    b = run_trajectory(model_quantum, "mash", 61, 3, 2.5, 6000, 600, epsilon=5e-324)
    assert a.status == b.status == 0
    assert np.array_equal(a.pops, b.pops)
    assert np.array_equal(a.counters[:3], b.counters[:3])


def test_epsilon_infinite_rejects_all_hops(model_quantum):
    res = run_trajectory(model_quantum, "mash", 61, 3, 2.5, 6000, 600,
                         epsilon=1e9)
    assert res.status == 0
    assert res.counters[1] == 0               # no accepted hops
    assert res.counters[3] > 0                # everything eps-rejected


def test_trajectory_determinism(model_quantum):
    a = run_trajectory(model_quantum, "mash", 67, 9, 2.5, 3000, 300)
    b = run_trajectory(model_quantum, "mash", 67, 9, 2.5, 3000, 300)
    assert np.array_equal(a.pops, b.pops)
    c = run_trajectory(model_quantum, "mash", 67, 10, 2.5, 3000, 300)
    assert not np.array_equal(a.pops, c.pops)


def test_trace_output(model_quantum):
    res = run_trajectory(model_quantum, "mash", 71, 0, 2.5, 2000, 200,
                         trace_every=100)
    tr = res.trace
    assert tr is not None
    assert tr["E"].shape == (21, model_quantum.n_states)
    assert np.all(np.isfinite(tr["E"]))
    assert np.all(tr["n_photon"] >= -1e-6)
    assert np.all(tr["d_an"] >= 0.0)
