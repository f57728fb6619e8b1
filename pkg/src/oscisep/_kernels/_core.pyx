# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled marches for the fixed-step integrators.

Specialised to potentials of the form

    U(q) = 1/2 sum_i quad[i] q_i^2 + (sum_i w[i] q_i)^3

on the flattened coordinate vector.  Long production runs take ~1e9 steps,
so these loops are kept free of Python objects; everything else (recording
plans, energy bookkeeping, generic potentials) lives in Python.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

DEF BLOW_LIMIT = 1e100


def trig_march(double[::1] q, double[::1] p, double h, long long nsteps,
               double[::1] cosd, double[::1] sino, double[::1] wsin,
               double[::1] hhs, double[::1] w, double[::1] quad,
               double[::1] om2, long d0, double radius,
               long long[::1] sample_steps,
               double[:, ::1] out_q, double[:, ::1] out_p):
    """One-step trigonometric scheme, marched nsteps times in place.

    Records (q, p) rows at the step indices in sample_steps (ascending,
    may start at 0 for the initial state), and tracks the oscillatory-energy
    deviation max_s |H_osc(s) - H_osc(0)| at every step.  Returns
    (flag_step, blow_step, dev_max, dev_step); flag_step is the first step
    at which |q_0| > radius, blow_step the first step with a non-finite
    coupling sum (-1 when never).
    """
    cdef Py_ssize_t D = q.shape[0]
    cdef Py_ssize_t i
    cdef long long s, si = 0, nsamp = sample_steps.shape[0]
    cdef long long flag_step = -1, blow_step = -1, dev_step = 0
    cdef double S, c3, r2, half_h = 0.5 * h
    cdef double e0, e, dev, dev_max = 0.0
    cdef double[::1] g = np.empty(D)
    cdef double[::1] qn = np.empty(D)
    cdef double[::1] gn = np.empty(D)

    r2 = 0.0
    for i in range(d0):
        r2 += q[i] * q[i]
    if r2 > radius * radius:
        flag_step = 0
    if nsamp > 0 and sample_steps[0] == 0:
        for i in range(D):
            out_q[0, i] = q[i]
            out_p[0, i] = p[i]
        si = 1

    e0 = 0.0
    for i in range(d0, D):
        e0 += 0.5 * (p[i] * p[i] + om2[i] * q[i] * q[i])

    S = 0.0
    for i in range(D):
        S += w[i] * q[i]
    c3 = 3.0 * S * S
    for i in range(D):
        g[i] = -c3 * w[i] - quad[i] * q[i]

    for s in range(1, nsteps + 1):
        for i in range(D):
            qn[i] = cosd[i] * q[i] + sino[i] * p[i] + hhs[i] * g[i]
        S = 0.0
        for i in range(D):
            S += w[i] * qn[i]
        if S != S or fabs(S) > BLOW_LIMIT:
            blow_step = s
            break
        c3 = 3.0 * S * S
        for i in range(D):
            gn[i] = -c3 * w[i] - quad[i] * qn[i]
        for i in range(D):
            p[i] = -wsin[i] * q[i] + cosd[i] * p[i] + half_h * (cosd[i] * g[i] + gn[i])
            q[i] = qn[i]
            g[i] = gn[i]
        e = 0.0
        for i in range(d0, D):
            e += 0.5 * (p[i] * p[i] + om2[i] * q[i] * q[i])
        dev = fabs(e - e0)
        if dev > dev_max:
            dev_max = dev
            dev_step = s
        if flag_step < 0:
            r2 = 0.0
            for i in range(d0):
                r2 += q[i] * q[i]
            if r2 > radius * radius:
                flag_step = s
        if si < nsamp and s == sample_steps[si]:
            for i in range(D):
                out_q[si, i] = q[i]
                out_p[si, i] = p[i]
            si += 1

    return flag_step, blow_step, dev_max, dev_step


def rk4_march(double[::1] q, double[::1] p, double h, long long nsteps,
              double[::1] om2, double[::1] w, double[::1] quad,
              long d0, double radius,
              long long[::1] sample_steps,
              double[:, ::1] out_q, double[:, ::1] out_p):
    """Classical Runge-Kutta march of qdd = -om2*q - grad U(q); same contract
    as trig_march."""
    cdef Py_ssize_t D = q.shape[0]
    cdef Py_ssize_t i
    cdef long long s, si = 0, nsamp = sample_steps.shape[0]
    cdef long long flag_step = -1, blow_step = -1, dev_step = 0
    cdef double e0, e, dev, dev_max = 0.0
    cdef double S, c3, r2, h2 = 0.5 * h, h6 = h / 6.0
    cdef double[::1] k1p = np.empty(D)
    cdef double[::1] k2p = np.empty(D)
    cdef double[::1] k3p = np.empty(D)
    cdef double[::1] k4p = np.empty(D)
    cdef double[::1] k2q = np.empty(D)
    cdef double[::1] k3q = np.empty(D)
    cdef double[::1] k4q = np.empty(D)
    cdef double[::1] qt = np.empty(D)

    r2 = 0.0
    for i in range(d0):
        r2 += q[i] * q[i]
    if r2 > radius * radius:
        flag_step = 0
    if nsamp > 0 and sample_steps[0] == 0:
        for i in range(D):
            out_q[0, i] = q[i]
            out_p[0, i] = p[i]
        si = 1

    e0 = 0.0
    for i in range(d0, D):
        e0 += 0.5 * (p[i] * p[i] + om2[i] * q[i] * q[i])

    for s in range(1, nsteps + 1):
        # k1
        S = 0.0
        for i in range(D):
            S += w[i] * q[i]
        c3 = 3.0 * S * S
        for i in range(D):
            k1p[i] = -om2[i] * q[i] - c3 * w[i] - quad[i] * q[i]
        # k2
        for i in range(D):
            qt[i] = q[i] + h2 * p[i]
            k2q[i] = p[i] + h2 * k1p[i]
        S = 0.0
        for i in range(D):
            S += w[i] * qt[i]
        c3 = 3.0 * S * S
        for i in range(D):
            k2p[i] = -om2[i] * qt[i] - c3 * w[i] - quad[i] * qt[i]
        # k3
        for i in range(D):
            qt[i] = q[i] + h2 * k2q[i]
            k3q[i] = p[i] + h2 * k2p[i]
        S = 0.0
        for i in range(D):
            S += w[i] * qt[i]
        c3 = 3.0 * S * S
        for i in range(D):
            k3p[i] = -om2[i] * qt[i] - c3 * w[i] - quad[i] * qt[i]
        # k4
        for i in range(D):
            qt[i] = q[i] + h * k3q[i]
            k4q[i] = p[i] + h * k3p[i]
        S = 0.0
        for i in range(D):
            S += w[i] * qt[i]
        if S != S or fabs(S) > BLOW_LIMIT:
            blow_step = s
            break
        c3 = 3.0 * S * S
        for i in range(D):
            k4p[i] = -om2[i] * qt[i] - c3 * w[i] - quad[i] * qt[i]
        for i in range(D):
            q[i] += h6 * (p[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i])
            p[i] += h6 * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i])
        e = 0.0
        for i in range(d0, D):
            e += 0.5 * (p[i] * p[i] + om2[i] * q[i] * q[i])
        dev = fabs(e - e0)
        if dev > dev_max:
            dev_max = dev
            dev_step = s
        if flag_step < 0:
            r2 = 0.0
            for i in range(d0):
                r2 += q[i] * q[i]
            if r2 > radius * radius:
                flag_step = s
        if si < nsamp and s == sample_steps[si]:
            for i in range(D):
                out_q[si, i] = q[i]
                out_p[si, i] = p[i]
            si += 1

    return flag_step, blow_step, dev_max, dev_step
