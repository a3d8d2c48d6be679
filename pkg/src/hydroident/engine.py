"""Compiled inner loops for chain simulation.

Everything here runs on flat packed arrays; dynamics owns packing and the
public API. Kernels report failure through status codes instead of
exceptions: 0 ok, 1 diverged, 2 singular mass matrix.

Packed layout (one row per link unless noted):
    geom:    length, com_offset, mass, inertia_com, rx, ry, rz, overlap
    derived: volume, surface_area, mean_radius, net_weight = (m - rho V) g
    joint:   damping, friction_loss
    act:     kv, tau_min, tau_max
    segs:    t_start, t_end, v_ref rows; joint j owns seg_off[j]:seg_off[j+1]
    fluid:   rho, beta
    coeffs:  c0..c4
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .hydro import wrench_core

STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_SINGULAR = 2

# |qdot| beyond this is unphysical for any modelled motion; treat as blow-up
QDOT_LIMIT = 1.0e6
# squared Cholesky pivot ratio, a cheap condition-number estimate
COND_LIMIT = 1.0e12
# rad/s scale of the tanh regularizing coulomb friction
FRICTION_EPS = 1.0e-3


@njit(cache=True)
def _fk_arrays(base, geom, q, qdot, th, p, u, r, vp, vc, om):
    # world angles, joint origins, axis dirs, COMs, and their velocities,
    # walking the chain once; joint i+1 sits at (length - overlap) along i
    n = q.shape[0]
    th_acc = base[2]
    om_acc = 0.0
    px = base[0]
    py = base[1]
    vx = 0.0
    vy = 0.0
    for i in range(n):
        th_acc += q[i]
        om_acc += qdot[i]
        th[i] = th_acc
        om[i] = om_acc
        c = np.cos(th_acc)
        s = np.sin(th_acc)
        u[i, 0] = c
        u[i, 1] = s
        p[i, 0] = px
        p[i, 1] = py
        vp[i, 0] = vx
        vp[i, 1] = vy
        lc = geom[i, 1]
        rx_ = px + lc * c
        ry_ = py + lc * s
        r[i, 0] = rx_
        r[i, 1] = ry_
        vc[i, 0] = vx - om_acc * (ry_ - py)
        vc[i, 1] = vy + om_acc * (rx_ - px)
        step = geom[i, 0] - geom[i, 7]
        nx = px + step * c
        ny = py + step * s
        vx = vx - om_acc * (ny - py)
        vy = vy + om_acc * (nx - px)
        px = nx
        py = ny


@njit(cache=True)
def _fk_vertices(base, geom, q, out):
    # centerline polyline: joint origins then the distal tip (n+1 points)
    n = q.shape[0]
    th = base[2]
    px = base[0]
    py = base[1]
    for i in range(n):
        th += q[i]
        out[i, 0] = px
        out[i, 1] = py
        c = np.cos(th)
        s = np.sin(th)
        if i == n - 1:
            step = geom[i, 0]
        else:
            step = geom[i, 0] - geom[i, 7]
        px += step * c
        py += step * s
    out[n, 0] = px
    out[n, 1] = py


@njit(cache=True)
def _mass_bias(geom, derived, p, r, om, ac, M, b):
    # M[j,k] = sum_{i>=max(j,k)} m_i (r_i-p_j).(r_i-p_k) + I_i; the planar
    # Jacobian columns zhat x (r_i-p_j) drop the rotation under the dot.
    # Mirror assignment keeps M - M^T identically zero.
    n = p.shape[0]
    for j in range(n):
        for k in range(j, n):
            acc = 0.0
            for i in range(k, n):
                acc += geom[i, 2] * ((r[i, 0] - p[j, 0]) * (r[i, 0] - p[k, 0])
                                     + (r[i, 1] - p[j, 1]) * (r[i, 1] - p[k, 1])) + geom[i, 3]
            M[j, k] = acc
            M[k, j] = acc
    # bias b: COM accelerations at qddot = 0 (pure centripetal chain) give
    # the Coriolis part; net weight (gravity minus buoyancy along -y) gives
    # the rest. Convention: M qddot + b = tau, so a sinking horizontal link
    # with the COM at +x has b = +(m - rho V) g com_offset and accelerates
    # clockwise under zero applied torque.
    ax = 0.0
    ay = 0.0
    for i in range(n):
        w2 = om[i] * om[i]
        ac[i, 0] = ax - w2 * (r[i, 0] - p[i, 0])
        ac[i, 1] = ay - w2 * (r[i, 1] - p[i, 1])
        if i + 1 < n:
            ax -= w2 * (p[i + 1, 0] - p[i, 0])
            ay -= w2 * (p[i + 1, 1] - p[i, 1])
    for j in range(n):
        acc = 0.0
        for i in range(j, n):
            acc += geom[i, 2] * (ac[i, 1] * (r[i, 0] - p[j, 0])
                                 - ac[i, 0] * (r[i, 1] - p[j, 1]))
            acc += derived[i, 3] * (r[i, 0] - p[j, 0])
        b[j] = acc


@njit(cache=True)
def _chol_solve(A, rhs, x, L):
    # Cholesky with a pivot-ratio condition estimate; solves A x = rhs
    n = A.shape[0]
    min_piv = 1.0e300
    max_piv = 0.0
    for j in range(n):
        for i in range(j, n):
            acc = A[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            if i == j:
                if acc <= 0.0 or not np.isfinite(acc):
                    return STATUS_SINGULAR
                piv = np.sqrt(acc)
                L[j, j] = piv
                if piv < min_piv:
                    min_piv = piv
                if piv > max_piv:
                    max_piv = piv
            else:
                L[i, j] = acc / L[j, j]
    if max_piv * max_piv > COND_LIMIT * (min_piv * min_piv):
        return STATUS_SINGULAR
    for i in range(n):
        acc = rhs[i]
        for k in range(i):
            acc -= L[i, k] * x[k]
        x[i] = acc / L[i, i]
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for k in range(i + 1, n):
            acc -= L[k, i] * x[k]
        x[i] = acc / L[i, i]
    return STATUS_OK


@njit(cache=True)
def _forces(t, q, qdot, base, geom, derived, joint, act, seg_off, segs, fluid,
            coeffs, th, p, u, r, vp, vc, om, ac, M, rhs):
    # fills M and rhs = tau_act + tau_fric + Q_fluid - bias; joint viscous
    # damping is deliberately left out (each integrator applies its own)
    n = q.shape[0]
    _fk_arrays(base, geom, q, qdot, th, p, u, r, vp, vc, om)
    _mass_bias(geom, derived, p, r, om, ac, M, rhs)
    for j in range(n):
        rhs[j] = -rhs[j]
    rho = fluid[0]
    beta = fluid[1]
    for i in range(n):
        fx, fy, tau = wrench_core(coeffs[i, 0], coeffs[i, 1], coeffs[i, 2],
                                  coeffs[i, 3], coeffs[i, 4], rho, beta,
                                  geom[i, 4], geom[i, 5], geom[i, 6],
                                  derived[i, 0], derived[i, 1], derived[i, 2],
                                  u[i, 0], u[i, 1], vc[i, 0], vc[i, 1], om[i])
        for j in range(i + 1):
            rhs[j] += fx * (p[j, 1] - r[i, 1]) + fy * (r[i, 0] - p[j, 0]) + tau
    for j in range(n):
        if act[j, 0] > 0.0 or seg_off[j + 1] > seg_off[j]:
            vref = 0.0
            for s in range(seg_off[j], seg_off[j + 1]):
                # half-open segments [t0, t1); v_ref = 0 outside all of them
                if segs[s, 0] <= t and t < segs[s, 1]:
                    vref = segs[s, 2]
                    break
            tau_a = act[j, 0] * (vref - qdot[j])
            if tau_a < act[j, 1]:
                tau_a = act[j, 1]
            elif tau_a > act[j, 2]:
                tau_a = act[j, 2]
            rhs[j] += tau_a
        rhs[j] -= joint[j, 1] * np.tanh(qdot[j] / FRICTION_EPS)


@njit(cache=True)
def _simulate_si(base, geom, derived, joint, act, seg_off, segs, fluid, coeffs,
                 q0, qdot0, t0, dt, n_steps, t_samples, out_q, out_qdot,
                 out_vertices, final_state):
    """Semi-implicit Euler with implicit joint damping.

    Per step: (M + dt diag(damping)) qdot' = M qdot + dt rhs, then
    q' = q + dt qdot'. Sample times are served by linear interpolation of
    (q, qdot) across the bracketing step, then forward kinematics.
    """
    n = q0.shape[0]
    th = np.empty(n)
    p = np.empty((n, 2))
    u = np.empty((n, 2))
    r = np.empty((n, 2))
    vp = np.empty((n, 2))
    vc = np.empty((n, 2))
    om = np.empty(n)
    ac = np.empty((n, 2))
    M = np.empty((n, n))
    A = np.empty((n, n))
    L = np.empty((n, n))
    rhs = np.empty(n)
    bvec = np.empty(n)
    qs = np.empty(n)
    qds = np.empty(n)
    q = q0.copy()
    qdot = qdot0.copy()
    q_new = np.empty(n)
    qdot_new = np.empty(n)
    n_samp = t_samples.shape[0]
    si = 0
    while si < n_samp and t_samples[si] <= t0:
        _fk_vertices(base, geom, q, out_vertices[si])
        for j in range(n):
            out_q[si, j] = q[j]
            out_qdot[si, j] = qdot[j]
        si += 1
    t = t0
    for step in range(n_steps):
        t_next = t0 + (step + 1) * dt
        _forces(t, q, qdot, base, geom, derived, joint, act, seg_off, segs,
                fluid, coeffs, th, p, u, r, vp, vc, om, ac, M, rhs)
        for j in range(n):
            mv = 0.0
            for k in range(n):
                A[j, k] = M[j, k]
                mv += M[j, k] * qdot[k]
            A[j, j] = M[j, j] + dt * joint[j, 0]
            bvec[j] = mv + dt * rhs[j]
        status = _chol_solve(A, bvec, qdot_new, L)
        if status != STATUS_OK:
            return status
        for j in range(n):
            if not np.isfinite(qdot_new[j]) or abs(qdot_new[j]) > QDOT_LIMIT:
                return STATUS_DIVERGED
            q_new[j] = q[j] + dt * qdot_new[j]
        while si < n_samp and t_samples[si] <= t_next:
            a = (t_samples[si] - t) / dt
            if a < 0.0:
                a = 0.0
            elif a > 1.0:
                a = 1.0
            for j in range(n):
                qs[j] = q[j] + a * (q_new[j] - q[j])
                qds[j] = qdot[j] + a * (qdot_new[j] - qdot[j])
            _fk_vertices(base, geom, qs, out_vertices[si])
            for j in range(n):
                out_q[si, j] = qs[j]
                out_qdot[si, j] = qds[j]
            si += 1
        for j in range(n):
            q[j] = q_new[j]
            qdot[j] = qdot_new[j]
        t = t_next
        if si >= n_samp:
            break
    # float dust can leave the last sample microscopically past the final
    # step; serve it from the final state
    while si < n_samp:
        _fk_vertices(base, geom, q, out_vertices[si])
        for j in range(n):
            out_q[si, j] = q[j]
            out_qdot[si, j] = qdot[j]
        si += 1
    for j in range(n):
        final_state[0, j] = q[j]
        final_state[1, j] = qdot[j]
    return STATUS_OK


@njit(cache=True)
def _accel(t, q, qdot, base, geom, derived, joint, act, seg_off, segs, fluid,
           coeffs, th, p, u, r, vp, vc, om, ac, M, rhs, L, bvec, qddot):
    # explicit acceleration: M qddot = rhs - damping qdot
    _forces(t, q, qdot, base, geom, derived, joint, act, seg_off, segs,
            fluid, coeffs, th, p, u, r, vp, vc, om, ac, M, rhs)
    n = q.shape[0]
    for j in range(n):
        bvec[j] = rhs[j] - joint[j, 0] * qdot[j]
    return _chol_solve(M, bvec, qddot, L)


@njit(cache=True)
def _simulate_rk4(base, geom, derived, joint, act, seg_off, segs, fluid, coeffs,
                  q0, qdot0, t0, dt, n_steps, t_samples, out_q, out_qdot,
                  out_vertices, final_state):
    """Classic fourth-order Runge-Kutta on (q, qdot); damping explicit.

    Reserved for conservation checks at small dt; same sampling contract
    as the semi-implicit kernel.
    """
    n = q0.shape[0]
    th = np.empty(n)
    p = np.empty((n, 2))
    u = np.empty((n, 2))
    r = np.empty((n, 2))
    vp = np.empty((n, 2))
    vc = np.empty((n, 2))
    om = np.empty(n)
    ac = np.empty((n, 2))
    M = np.empty((n, n))
    L = np.empty((n, n))
    rhs = np.empty(n)
    bvec = np.empty(n)
    qs = np.empty(n)
    qds = np.empty(n)
    qa = np.empty(n)
    qda = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    qd2 = np.empty(n)
    qd3 = np.empty(n)
    q = q0.copy()
    qdot = qdot0.copy()
    q_new = np.empty(n)
    qdot_new = np.empty(n)
    n_samp = t_samples.shape[0]
    si = 0
    while si < n_samp and t_samples[si] <= t0:
        _fk_vertices(base, geom, q, out_vertices[si])
        for j in range(n):
            out_q[si, j] = q[j]
            out_qdot[si, j] = qdot[j]
        si += 1
    t = t0
    for step in range(n_steps):
        t_next = t0 + (step + 1) * dt
        status = _accel(t, q, qdot, base, geom, derived, joint, act, seg_off,
                        segs, fluid, coeffs, th, p, u, r, vp, vc, om, ac, M,
                        rhs, L, bvec, k1)
        if status != STATUS_OK:
            return status
        half = 0.5 * dt
        for j in range(n):
            qa[j] = q[j] + half * qdot[j]
            qda[j] = qdot[j] + half * k1[j]
        status = _accel(t + half, qa, qda, base, geom, derived, joint, act,
                        seg_off, segs, fluid, coeffs, th, p, u, r, vp, vc, om,
                        ac, M, rhs, L, bvec, k2)
        if status != STATUS_OK:
            return status
        for j in range(n):
            # dq/dt at stage 2 is the velocity k2 was evaluated at
            qd2[j] = qda[j]
            qa[j] = q[j] + half * qd2[j]
            qda[j] = qdot[j] + half * k2[j]
        status = _accel(t + half, qa, qda, base, geom, derived, joint, act,
                        seg_off, segs, fluid, coeffs, th, p, u, r, vp, vc, om,
                        ac, M, rhs, L, bvec, k3)
        if status != STATUS_OK:
            return status
        for j in range(n):
            qd3[j] = qda[j]
            qa[j] = q[j] + dt * qd3[j]
            qda[j] = qdot[j] + dt * k3[j]
        status = _accel(t + dt, qa, qda, base, geom, derived, joint, act,
                        seg_off, segs, fluid, coeffs, th, p, u, r, vp, vc, om,
                        ac, M, rhs, L, bvec, k4)
        if status != STATUS_OK:
            return status
        for j in range(n):
            qd4 = qda[j]
            q_new[j] = q[j] + dt / 6.0 * (qdot[j] + 2.0 * qd2[j] + 2.0 * qd3[j] + qd4)
            qdot_new[j] = qdot[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            if not np.isfinite(qdot_new[j]) or abs(qdot_new[j]) > QDOT_LIMIT:
                return STATUS_DIVERGED
        while si < n_samp and t_samples[si] <= t_next:
            a = (t_samples[si] - t) / dt
            if a < 0.0:
                a = 0.0
            elif a > 1.0:
                a = 1.0
            for j in range(n):
                qs[j] = q[j] + a * (q_new[j] - q[j])
                qds[j] = qdot[j] + a * (qdot_new[j] - qdot[j])
            _fk_vertices(base, geom, qs, out_vertices[si])
            for j in range(n):
                out_q[si, j] = qs[j]
                out_qdot[si, j] = qds[j]
            si += 1
        for j in range(n):
            q[j] = q_new[j]
            qdot[j] = qdot_new[j]
        t = t_next
        if si >= n_samp:
            break
    while si < n_samp:
        _fk_vertices(base, geom, q, out_vertices[si])
        for j in range(n):
            out_q[si, j] = q[j]
            out_qdot[si, j] = qdot[j]
        si += 1
    for j in range(n):
        final_state[0, j] = q[j]
        final_state[1, j] = qdot[j]
    return STATUS_OK
