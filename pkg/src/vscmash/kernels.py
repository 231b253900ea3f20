"""Numba trajectory kernels.

Single trajectories are propagated entirely inside compiled code: the
energy matrix is assembled from two linearly-coupled harmonic baths, the
small (4 or 4*N_p dimensional) quantum subsystem is re-diagonalized each
step by a warm-started cyclic Jacobi sweep, and the surface-hopping
bookkeeping (rollback, impulse test, momentum rescaling/reversal) runs
in place on preallocated buffers.

The warm start makes the Jacobi rotations small, so eigenvector columns
stay continuous across steps by construction (labels follow character,
not energy order); this is what the local-diabatization transport and
the active-state bookkeeping rely on.

Status codes: 0 ok, 1 non-finite amplitudes, 2 quantum step-size/norm
failure, 3 eigensolver failure.
"""

import numpy as np
from numba import njit

# 'afn' (approximate transcendentals) is deliberately excluded: the
# phase factors must be unimodular to machine precision or the
# amplitude norm drifts over 10^5-step trajectories.
_FASTMATH = {"reassoc", "contract", "arcp", "nsz"}

STATUS_OK = 0
STATUS_NAN = 1
STATUS_NORM = 2
STATUS_EIGH = 3

_DEGENERATE_GAP = 1e-12


@njit(cache=True, fastmath=_FASTMATH)
def _assemble(H0ct, O1, O2, g1, g2, q, M):
    """M = H0ct - (g1.q1) O1 - (g2.q2) O2; the scalar bath potential is
    tracked separately (it only shifts every eigenvalue)."""
    n = H0ct.shape[0]
    nb1 = g1.shape[0]
    s1 = 0.0
    for i in range(nb1):
        s1 += g1[i] * q[i]
    s2 = 0.0
    for i in range(g2.shape[0]):
        s2 += g2[i] * q[nb1 + i]
    for i in range(n):
        for j in range(n):
            M[i, j] = H0ct[i, j] - s1 * O1[i, j] - s2 * O2[i, j]


@njit(cache=True, fastmath=_FASTMATH)
def _bath_potential(w1, w2, q):
    nb1 = w1.shape[0]
    v = 0.0
    for i in range(nb1):
        v += w1[i] * w1[i] * q[i] * q[i]
    for i in range(w2.shape[0]):
        v += w2[i] * w2[i] * q[nb1 + i] * q[nb1 + i]
    return 0.5 * v


@njit(cache=True, fastmath=_FASTMATH)
def _kinetic(p):
    k = 0.0
    for i in range(p.shape[0]):
        k += p[i] * p[i]
    return 0.5 * k


@njit(cache=True, fastmath=_FASTMATH)
def _jacobi(M, V, A, T, E):
    """Diagonalize symmetric M, warm-started from the eigenvectors in V.

    A = V^T M V is near-diagonal when V carries the previous step's
    eigenvectors; cyclic Jacobi then converges in one or two sweeps and
    the accumulated rotations keep the columns of V continuous (small
    rotations, diag(V_old^T V_new) > 0).  Eigenvalues land in E in the
    tracked (not sorted) order.
    """
    n = M.shape[0]
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += M[i, k] * V[k, j]
            T[i, j] = s
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += V[k, i] * T[k, j]
            A[i, j] = s
    for i in range(n):
        for j in range(i + 1, n):
            m = 0.5 * (A[i, j] + A[j, i])
            A[i, j] = m
            A[j, i] = m

    scale = 0.0
    for i in range(n):
        if abs(A[i, i]) > scale:
            scale = abs(A[i, i])
    tol2 = (1e-13 * (scale + 1e-30)) ** 2

    converged = False
    sweeps_used = 0
    for sweep_i in range(60):
        off2 = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                off2 += A[i, j] * A[i, j]
        if off2 <= tol2:
            converged = True
            sweeps_used = sweep_i
            break
        for piv in range(n - 1):
            for qiv in range(piv + 1, n):
                apq = A[piv, qiv]
                if apq == 0.0:
                    continue
                theta = 0.5 * (A[qiv, qiv] - A[piv, piv]) / apq
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                cth = 1.0 / np.sqrt(t * t + 1.0)
                sth = t * cth
                for k in range(n):
                    akp = A[k, piv]
                    akq = A[k, qiv]
                    A[k, piv] = cth * akp - sth * akq
                    A[k, qiv] = sth * akp + cth * akq
                for k in range(n):
                    apk = A[piv, k]
                    aqk = A[qiv, k]
                    A[piv, k] = cth * apk - sth * aqk
                    A[qiv, k] = sth * apk + cth * aqk
                for k in range(n):
                    vkp = V[k, piv]
                    vkq = V[k, qiv]
                    V[k, piv] = cth * vkp - sth * vkq
                    V[k, qiv] = sth * vkp + cth * vkq
    for i in range(n):
        E[i] = A[i, i]
    if converged:
        return sweeps_used
    return -1


@njit(cache=True, fastmath=_FASTMATH)
def _reorthonormalize(V):
    """Modified Gram-Schmidt on the columns of V (drift hygiene).

    The Jacobi accumulation applies ~10^2 rotations per step; over 10^5
    steps the roundoff would otherwise show up as a slow norm drift of
    the transported amplitudes."""
    n = V.shape[0]
    for j in range(n):
        for k in range(j):
            dot = 0.0
            for i in range(n):
                dot += V[i, k] * V[i, j]
            for i in range(n):
                V[i, j] -= dot * V[i, k]
        nrm = 0.0
        for i in range(n):
            nrm += V[i, j] * V[i, j]
        inv = 1.0 / np.sqrt(nrm)
        for i in range(n):
            V[i, j] *= inv


@njit(cache=True, fastmath=_FASTMATH)
def _surface_gradient_coeffs(V, O1, O2, a):
    """<a|O1|a>, <a|O2|a> for the active column a of V."""
    n = V.shape[0]
    o1 = 0.0
    o2 = 0.0
    for i in range(n):
        vi = V[i, a]
        acc1 = 0.0
        acc2 = 0.0
        for j in range(n):
            acc1 += O1[i, j] * V[j, a]
            acc2 += O2[i, j] * V[j, a]
        o1 += vi * acc1
        o2 += vi * acc2
    return o1, o2


@njit(cache=True, fastmath=_FASTMATH)
def _kick_active(p, q, w1, w2, g1, g2, o1aa, o2aa, half_dt):
    """p -= half_dt * grad E_active;  grad_j E_a = w_j^2 q_j - g_j O_aa."""
    nb1 = w1.shape[0]
    for i in range(nb1):
        p[i] -= half_dt * (w1[i] * w1[i] * q[i] - g1[i] * o1aa)
    for i in range(w2.shape[0]):
        j = nb1 + i
        p[j] -= half_dt * (w2[i] * w2[i] * q[j] - g2[i] * o2aa)


@njit(cache=True, fastmath=_FASTMATH)
def _adiabatic_columns(V, O, a, b, work, col_a, col_b):
    """col_x[m] = <m|O|x> for adiabatic columns x in {a, b}."""
    n = V.shape[0]
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += O[i, j] * V[j, a]
        work[i] = s
    for m in range(n):
        s = 0.0
        for i in range(n):
            s += V[i, m] * work[i]
        col_a[m] = s
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += O[i, j] * V[j, b]
        work[i] = s
    for m in range(n):
        s = 0.0
        for i in range(n):
            s += V[i, m] * work[i]
        col_b[m] = s


@njit(cache=True, fastmath=_FASTMATH)
def _hop_geometry(V, E, c, O1, O2, g1sq_sum, g2sq_sum, pg1, pg2, a, b,
                  work, col1a, col1b, col2a, col2b):
    """Impulse direction and scalar coupling between adiabats a and b.

    The direction delta_ab = grad(rho_a - rho_b) of the population
    crossing is a linear combination of the two bath coupling vectors,
    delta_j = -A1 g1_j (solvent block) and -A2 g2_j (second bath), so it
    is represented by the pair (A1, A2).  Returns
    (A1, A2, |delta|^2, p_parallel, d_an) where p_parallel is the
    mass-weighted momentum projected on delta and d_an the direct scalar
    nonadiabatic coupling sum_j p_j d_ab^j used by the hop threshold.
    """
    n = V.shape[0]
    _adiabatic_columns(V, O1, a, b, work, col1a, col1b)
    _adiabatic_columns(V, O2, a, b, work, col2a, col2b)

    ca_re = c[a].real
    ca_im = c[a].imag
    cb_re = c[b].real
    cb_im = c[b].imag
    A1 = 0.0
    A2 = 0.0
    for m in range(n):
        cm_re = c[m].real
        cm_im = c[m].imag
        if m != a:
            gap = E[a] - E[m]
            if abs(gap) > _DEGENERATE_GAP:
                w = (cm_re * ca_re + cm_im * ca_im) / gap
                A1 += col1a[m] * w
                A2 += col2a[m] * w
        if m != b:
            gap = E[b] - E[m]
            if abs(gap) > _DEGENERATE_GAP:
                w = (cm_re * cb_re + cm_im * cb_im) / gap
                A1 -= col1b[m] * w
                A2 -= col2b[m] * w

    delta2 = A1 * A1 * g1sq_sum + A2 * A2 * g2sq_sum
    p_par = 0.0
    if delta2 > 0.0:
        p_par = -(A1 * pg1 + A2 * pg2) / np.sqrt(delta2)

    gap_ab = E[b] - E[a]
    if abs(gap_ab) > _DEGENERATE_GAP:
        d_an = -(pg1 * col1a[b] + pg2 * col2a[b]) / gap_ab
    else:
        d_an = 0.0
    return A1, A2, delta2, p_par, d_an


@njit(cache=True, fastmath=_FASTMATH)
def _mash_update(dt, c, q, p, V, E, M, A, T, cbuf,
                 H0ct, O1, O2, g1, w1, g2, w2, active):
    """One local-diabatization + velocity-Verlet update of length dt."""
    n = c.shape[0]
    # adiabatic phase half-step at the current configuration
    for m in range(n):
        ph = -0.5 * dt * E[m]
        c[m] = c[m] * complex(np.cos(ph), np.sin(ph))
    # to the working (diabatic) frame with the current eigenvectors
    for i in range(n):
        s = complex(0.0, 0.0)
        for m in range(n):
            s += V[i, m] * c[m]
        cbuf[i] = s
    # classical kick-drift-kick on the active surface
    o1aa, o2aa = _surface_gradient_coeffs(V, O1, O2, active)
    _kick_active(p, q, w1, w2, g1, g2, o1aa, o2aa, 0.5 * dt)
    for i in range(q.shape[0]):
        q[i] += dt * p[i]
    _assemble(H0ct, O1, O2, g1, g2, q, M)
    sw = _jacobi(M, V, A, T, E)
    if sw < 0:
        return STATUS_EIGH, 60
    o1aa, o2aa = _surface_gradient_coeffs(V, O1, O2, active)
    _kick_active(p, q, w1, w2, g1, g2, o1aa, o2aa, 0.5 * dt)
    # back to the (new) adiabatic frame and final phase half-step
    for m in range(n):
        s = complex(0.0, 0.0)
        for i in range(n):
            s += V[i, m] * cbuf[i]
        ph = -0.5 * dt * E[m]
        c[m] = s * complex(np.cos(ph), np.sin(ph))
    return STATUS_OK, sw


@njit(cache=True, fastmath=_FASTMATH)
def _population_mash(c, V, h_ext, alpha, beta, trace_h, cbuf):
    """alpha * <c_work| h |c_work> + beta * Tr h, with c_work = V c."""
    n = c.shape[0]
    for i in range(n):
        s = complex(0.0, 0.0)
        for m in range(n):
            s += V[i, m] * c[m]
        cbuf[i] = s
    quad = 0.0
    for i in range(n):
        accr = 0.0
        acci = 0.0
        for j in range(n):
            accr += h_ext[i, j] * cbuf[j].real
            acci += h_ext[i, j] * cbuf[j].imag
        quad += cbuf[i].real * accr + cbuf[i].imag * acci
    return alpha * quad + beta * trace_h


@njit(cache=True, fastmath=_FASTMATH)
def _matter_shift(V, a, b, n_p):
    """Half L1 distance of the matter-reduced populations of two adiabats."""
    n = V.shape[0]
    n_m = n // n_p
    s = 0.0
    for nu in range(n_m):
        pa = 0.0
        pb = 0.0
        for N in range(n_p):
            i = nu * n_p + N
            pa += V[i, a] * V[i, a]
            pb += V[i, b] * V[i, b]
        s += abs(pa - pb)
    return 0.5 * s


@njit(cache=True, fastmath=_FASTMATH)
def _active_photon(V, nphot, a):
    s = 0.0
    for i in range(V.shape[0]):
        s += V[i, a] * V[i, a] * nphot[i]
    return s


@njit(cache=True, fastmath=_FASTMATH)
def run_traj_mash(c, q, p, V, E, act_io, H0ct, O1, O2, g1, w1, g2, w2,
                  h_ext, nphot, n_p, alpha, beta, trace_h, eps, dt, n_steps,
                  rec_every, pops_out, counters, diag_out,
                  trace_every, trace_E, trace_active, trace_dan, trace_nphot):
    """Propagate one MASH trajectory; fills pops_out on the record grid.

    act_io holds [active, pending] on entry and exit, where pending is
    the index of an unresolved population inversion (-1 if none): the
    impulse fires when a population seam is newly crossed, not on every
    step for which the ordering stays inverted (a frustrated hop leaves
    the populations inverted for a while; re-localizing it every step
    would pin the trajectory at the seam).
    counters: [attempts, accepted, frustrated, eps_rejected,
               cross_photon_accepted (photon number and matter character
               both change), photon_only_accepted, undefined_direction]
    diag_out: [max_per_step_norm_change, max_cumulative_norm_err,
               max_hop_energy_relerr, max_segment_energy_drift,
               max_jacobi_sweeps]
    Returns a status code.
    """
    n = c.shape[0]
    nb = q.shape[0]
    nb1 = g1.shape[0]
    active = act_io[0]
    pending = act_io[1]

    M = np.empty((n, n))
    A = np.empty((n, n))
    T = np.empty((n, n))
    cbuf = np.empty(n, dtype=np.complex128)
    q_s = np.empty(nb)
    p_s = np.empty(nb)
    c_s = np.empty(n, dtype=np.complex128)
    V_s = np.empty((n, n))
    E_s = np.empty(n)
    work = np.empty(n)
    col1a = np.empty(n)
    col1b = np.empty(n)
    col2a = np.empty(n)
    col2b = np.empty(n)
    pops = np.empty(n)

    g1sq = 0.0
    for i in range(nb1):
        g1sq += g1[i] * g1[i]
    g2sq = 0.0
    for i in range(g2.shape[0]):
        g2sq += g2[i] * g2[i]

    pops_out[0] = _population_mash(c, V, h_ext, alpha, beta, trace_h, cbuf)
    e_ref = _kinetic(p) + _bath_potential(w1, w2, q) + E[active]
    e_scale = abs(e_ref) + 1e-8
    prev_nrm = 0.0
    for m in range(n):
        prev_nrm += c[m].real * c[m].real + c[m].imag * c[m].imag

    if trace_every > 0:
        trace_E[0, :] = E
        trace_active[0] = active
        trace_nphot[0] = _active_photon(V, nphot, active)
        trace_dan[0] = 0.0

    for step in range(1, n_steps + 1):
        # snapshot for the rollback path
        for i in range(nb):
            q_s[i] = q[i]
            p_s[i] = p[i]
        for i in range(n):
            c_s[i] = c[i]
            E_s[i] = E[i]
            for j in range(n):
                V_s[i, j] = V[i, j]

        st, sw = _mash_update(dt, c, q, p, V, E, M, A, T, cbuf,
                              H0ct, O1, O2, g1, w1, g2, w2, active)
        if st != STATUS_OK:
            return st
        if sw > diag_out[4]:
            diag_out[4] = sw

        nrm = 0.0
        bmax = 0
        pmax = -1.0
        for m in range(n):
            pm = c[m].real * c[m].real + c[m].imag * c[m].imag
            pops[m] = pm
            nrm += pm
            if pm > pmax:
                pmax = pm
                bmax = m
        if not np.isfinite(nrm):
            return STATUS_NAN
        step_err = abs(nrm - prev_nrm)
        if step_err > diag_out[0]:
            diag_out[0] = step_err
        err = abs(nrm - 1.0)
        if err > diag_out[1]:
            diag_out[1] = err
        if err > 1e-6:
            return STATUS_NORM
        prev_nrm = nrm
        if step % 512 == 0:
            _reorthonormalize(V)

        if bmax == active:
            pending = -1
        elif pending >= 0:
            pending = bmax  # unresolved inversion persists; no new crossing
        else:
            # new population crossing inside this step: roll back,
            # advance half a step, resolve the hop there, then finish.
            for i in range(nb):
                q[i] = q_s[i]
                p[i] = p_s[i]
            for i in range(n):
                c[i] = c_s[i]
                E[i] = E_s[i]
                for j in range(n):
                    V[i, j] = V_s[i, j]
            st, sw = _mash_update(0.5 * dt, c, q, p, V, E, M, A, T, cbuf,
                                  H0ct, O1, O2, g1, w1, g2, w2, active)
            if st != STATUS_OK:
                return st
            if sw > diag_out[4]:
                diag_out[4] = sw

            p_act = c[active].real ** 2 + c[active].imag ** 2
            n_cand = 0
            for m in range(n):
                pm = c[m].real ** 2 + c[m].imag ** 2
                pops[m] = pm
                if m != active and pm > p_act:
                    n_cand += 1

            if n_cand > 0:
                counters[0] += 1
                pg1 = 0.0
                for i in range(nb1):
                    pg1 += p[i] * g1[i]
                pg2 = 0.0
                for i in range(g2.shape[0]):
                    pg2 += p[nb1 + i] * g2[i]

                accepted = False
                first_mode = -1      # 0: eps-reject, 1: frustrated, 2: undefined
                first_u1 = 0.0
                first_u2 = 0.0
                first_ppar = 0.0
                used = np.zeros(n, dtype=np.uint8)
                for _ in range(n_cand):
                    best = -1
                    bestp = p_act
                    for m in range(n):
                        if m != active and used[m] == 0 and pops[m] > bestp:
                            bestp = pops[m]
                            best = m
                    if best < 0:
                        break
                    used[best] = 1
                    A1, A2, delta2, p_par, d_an = _hop_geometry(
                        V, E, c, O1, O2, g1sq, g2sq, pg1, pg2, active, best,
                        work, col1a, col1b, col2a, col2b)
                    if eps > 0.0 and abs(d_an) < eps:
                        if first_mode < 0:
                            first_mode = 0
                        continue
                    if delta2 <= 0.0:
                        counters[6] += 1
                        if first_mode < 0:
                            first_mode = 2
                        continue
                    barrier = E[best] - E[active]
                    if 0.5 * p_par * p_par > barrier:
                        # accept: rescale the parallel momentum component
                        e_before = _kinetic(p) + E[active]
                        scale = np.sqrt(p_par * p_par - 2.0 * barrier)
                        if p_par < 0.0:
                            scale = -scale
                        norm_d = np.sqrt(delta2)
                        coef = scale - p_par
                        u1 = -A1 / norm_d
                        u2 = -A2 / norm_d
                        for i in range(nb1):
                            p[i] += coef * u1 * g1[i]
                        for i in range(g2.shape[0]):
                            p[nb1 + i] += coef * u2 * g2[i]
                        e_after = _kinetic(p) + E[best]
                        rel = abs(e_after - e_before) / e_scale
                        if rel > diag_out[2]:
                            diag_out[2] = rel
                        dph = _active_photon(V, nphot, best) - _active_photon(V, nphot, active)
                        if abs(dph) > 0.5:
                            if _matter_shift(V, active, best, n_p) > 0.5:
                                counters[4] += 1
                            else:
                                counters[5] += 1
                        active = best
                        counters[1] += 1
                        accepted = True
                        e_ref = _kinetic(p) + _bath_potential(w1, w2, q) + E[active]
                        break
                    else:
                        if first_mode < 0:
                            first_mode = 1
                            norm_d = np.sqrt(delta2)
                            first_u1 = -A1 / norm_d
                            first_u2 = -A2 / norm_d
                            first_ppar = p_par
                if not accepted:
                    if first_mode == 1:
                        # frustrated: reverse the parallel momentum component
                        coef = -2.0 * first_ppar
                        for i in range(nb1):
                            p[i] += coef * first_u1 * g1[i]
                        for i in range(g2.shape[0]):
                            p[nb1 + i] += coef * first_u2 * g2[i]
                        counters[2] += 1
                        e_ref = _kinetic(p) + _bath_potential(w1, w2, q) + E[active]
                    elif first_mode == 0:
                        counters[3] += 1

            st, sw = _mash_update(0.5 * dt, c, q, p, V, E, M, A, T, cbuf,
                                  H0ct, O1, O2, g1, w1, g2, w2, active)
            if st != STATUS_OK:
                return st
            if sw > diag_out[4]:
                diag_out[4] = sw
            prev_nrm = 0.0
            bb = 0
            pm_max = -1.0
            for m in range(n):
                pm = c[m].real * c[m].real + c[m].imag * c[m].imag
                prev_nrm += pm
                if pm > pm_max:
                    pm_max = pm
                    bb = m
            pending = -1 if bb == active else bb

        if rec_every > 0 and step % rec_every == 0:
            k = step // rec_every
            if k < pops_out.shape[0]:
                pops_out[k] = _population_mash(c, V, h_ext, alpha, beta, trace_h, cbuf)
            e_tot = _kinetic(p) + _bath_potential(w1, w2, q) + E[active]
            drift = abs(e_tot - e_ref) / e_scale
            if drift > diag_out[3]:
                diag_out[3] = drift

        if trace_every > 0 and step % trace_every == 0:
            k = step // trace_every
            if k < trace_E.shape[0]:
                trace_E[k, :] = E
                trace_active[k] = active
                trace_nphot[k] = _active_photon(V, nphot, active)
                pg1 = 0.0
                for i in range(nb1):
                    pg1 += p[i] * g1[i]
                pg2 = 0.0
                for i in range(g2.shape[0]):
                    pg2 += p[nb1 + i] * g2[i]
                _adiabatic_columns(V, O1, active, active, work, col1a, col1b)
                _adiabatic_columns(V, O2, active, active, work, col2a, col2b)
                dmax = 0.0
                for m in range(n):
                    if m == active:
                        continue
                    gap = E[m] - E[active]
                    if abs(gap) > _DEGENERATE_GAP:
                        d = abs(-(pg1 * col1a[m] + pg2 * col2a[m]) / gap)
                        if d > dmax:
                            dmax = d
                trace_dan[k] = dmax

    act_io[0] = active
    act_io[1] = pending
    return STATUS_OK


@njit(cache=True, fastmath=_FASTMATH)
def _rk4_tdse(c, M, dt, k1, k2, k3, k4, tmp):
    """One RK4 step of dc/dt = -i M c with fixed M."""
    n = c.shape[0]
    for i in range(n):
        s = complex(0.0, 0.0)
        for j in range(n):
            s += M[i, j] * c[j]
        k1[i] = complex(s.imag, -s.real)
    for i in range(n):
        tmp[i] = c[i] + 0.5 * dt * k1[i]
    for i in range(n):
        s = complex(0.0, 0.0)
        for j in range(n):
            s += M[i, j] * tmp[j]
        k2[i] = complex(s.imag, -s.real)
    for i in range(n):
        tmp[i] = c[i] + 0.5 * dt * k2[i]
    for i in range(n):
        s = complex(0.0, 0.0)
        for j in range(n):
            s += M[i, j] * tmp[j]
        k3[i] = complex(s.imag, -s.real)
    for i in range(n):
        tmp[i] = c[i] + dt * k3[i]
    for i in range(n):
        s = complex(0.0, 0.0)
        for j in range(n):
            s += M[i, j] * tmp[j]
        k4[i] = complex(s.imag, -s.real)
    for i in range(n):
        c[i] = c[i] + (dt / 6.0) * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])


@njit(cache=True, fastmath=_FASTMATH)
def run_traj_ehrenfest(c, q, p, H0ct, O1, O2, g1, w1, g2, w2, h_ext,
                       dt, n_steps, rec_every, pops_out, diag_out):
    """Propagate one Ehrenfest trajectory in the working (diabatic) frame.

    RK4 half-steps on the amplitudes interleave a velocity-Verlet update
    with the mean-field force; the norm is never renormalized, only
    monitored (diag_out[0] tracks the worst per-step drift).
    """
    n = c.shape[0]
    nb1 = g1.shape[0]
    M = np.empty((n, n))
    k1 = np.empty(n, dtype=np.complex128)
    k2 = np.empty(n, dtype=np.complex128)
    k3 = np.empty(n, dtype=np.complex128)
    k4 = np.empty(n, dtype=np.complex128)
    tmp = np.empty(n, dtype=np.complex128)

    def _quad(cv, O):
        acc = 0.0
        for i in range(n):
            ar = 0.0
            ai = 0.0
            for j in range(n):
                ar += O[i, j] * cv[j].real
                ai += O[i, j] * cv[j].imag
            acc += cv[i].real * ar + cv[i].imag * ai
        return acc

    pops_out[0] = _quad(c, h_ext)
    prev_norm = 0.0
    for m in range(n):
        prev_norm += c[m].real ** 2 + c[m].imag ** 2

    _assemble(H0ct, O1, O2, g1, g2, q, M)
    for step in range(1, n_steps + 1):
        _rk4_tdse(c, M, 0.5 * dt, k1, k2, k3, k4, tmp)

        nrm = 0.0
        for m in range(n):
            nrm += c[m].real ** 2 + c[m].imag ** 2
        if not np.isfinite(nrm):
            return STATUS_NAN
        derr = abs(nrm - prev_norm)
        if derr > diag_out[0]:
            diag_out[0] = derr
        if derr > 1e-6:
            return STATUS_NORM
        prev_norm = nrm

        o1 = _quad(c, O1)
        o2 = _quad(c, O2)
        for i in range(nb1):
            p[i] -= 0.5 * dt * (w1[i] * w1[i] * q[i] * nrm - g1[i] * o1)
        for i in range(w2.shape[0]):
            j = nb1 + i
            p[j] -= 0.5 * dt * (w2[i] * w2[i] * q[j] * nrm - g2[i] * o2)
        for i in range(q.shape[0]):
            q[i] += dt * p[i]
        _assemble(H0ct, O1, O2, g1, g2, q, M)
        for i in range(nb1):
            p[i] -= 0.5 * dt * (w1[i] * w1[i] * q[i] * nrm - g1[i] * o1)
        for i in range(w2.shape[0]):
            j = nb1 + i
            p[j] -= 0.5 * dt * (w2[i] * w2[i] * q[j] * nrm - g2[i] * o2)

        _rk4_tdse(c, M, 0.5 * dt, k1, k2, k3, k4, tmp)

        nrm2 = 0.0
        for m in range(n):
            nrm2 += c[m].real ** 2 + c[m].imag ** 2
        derr = abs(nrm2 - prev_norm)
        if derr > diag_out[0]:
            diag_out[0] = derr
        if derr > 1e-6:
            return STATUS_NORM
        prev_norm = nrm2

        if rec_every > 0 and step % rec_every == 0:
            k = step // rec_every
            if k < pops_out.shape[0]:
                pops_out[k] = _quad(c, h_ext)

    return STATUS_OK
