"""Pure-numpy marches with the same contract as the compiled module.

Step-for-step identical arithmetic to _core.pyx up to the usual
vectorised-summation reordering; used when the extension is not built or
when OSCISEP_PURE_PYTHON is set.
"""

import numpy as np

BLOW_LIMIT = 1e100


def _h_osc(q, p, om2, d0):
    return 0.5 * float(np.dot(p[d0:], p[d0:]) + np.dot(om2[d0:] * q[d0:], q[d0:]))


def trig_march(q, p, h, nsteps, cosd, sino, wsin, hhs, w, quad, om2,
               d0, radius, sample_steps, out_q, out_p):
    q = np.asarray(q)
    p = np.asarray(p)
    si = 0
    nsamp = len(sample_steps)
    flag_step = -1
    blow_step = -1
    dev_max = 0.0
    dev_step = 0
    half_h = 0.5 * h
    if float(np.dot(q[:d0], q[:d0])) > radius * radius:
        flag_step = 0
    if nsamp > 0 and sample_steps[0] == 0:
        out_q[0] = q
        out_p[0] = p
        si = 1
    e0 = _h_osc(q, p, om2, d0)
    S = float(np.dot(w, q))
    g = -3.0 * S * S * w - quad * q
    for s in range(1, nsteps + 1):
        qn = cosd * q + sino * p + hhs * g
        S = float(np.dot(w, qn))
        if S != S or abs(S) > BLOW_LIMIT:
            blow_step = s
            break
        gn = -3.0 * S * S * w - quad * qn
        p = -wsin * q + cosd * p + half_h * (cosd * g + gn)
        q = qn
        g = gn
        dev = abs(_h_osc(q, p, om2, d0) - e0)
        if dev > dev_max:
            dev_max = dev
            dev_step = s
        if flag_step < 0 and float(np.dot(q[:d0], q[:d0])) > radius * radius:
            flag_step = s
        if si < nsamp and s == sample_steps[si]:
            out_q[si] = q
            out_p[si] = p
            si += 1
    return flag_step, blow_step, dev_max, dev_step, q, p


def rk4_march(q, p, h, nsteps, om2, w, quad, d0, radius,
              sample_steps, out_q, out_p):
    q = np.asarray(q)
    p = np.asarray(p)
    si = 0
    nsamp = len(sample_steps)
    flag_step = -1
    blow_step = -1
    dev_max = 0.0
    dev_step = 0
    h2 = 0.5 * h
    h6 = h / 6.0

    def accel(x):
        S = float(np.dot(w, x))
        return -om2 * x - 3.0 * S * S * w - quad * x, S

    if float(np.dot(q[:d0], q[:d0])) > radius * radius:
        flag_step = 0
    if nsamp > 0 and sample_steps[0] == 0:
        out_q[0] = q
        out_p[0] = p
        si = 1
    e0 = _h_osc(q, p, om2, d0)
    for s in range(1, nsteps + 1):
        k1p, _ = accel(q)
        k2q = p + h2 * k1p
        k2p, _ = accel(q + h2 * p)
        k3q = p + h2 * k2p
        k3p, _ = accel(q + h2 * k2q)
        k4q = p + h * k3p
        k4p, S = accel(q + h * k3q)
        if S != S or abs(S) > BLOW_LIMIT:
            blow_step = s
            break
        q = q + h6 * (p + 2.0 * k2q + 2.0 * k3q + k4q)
        p = p + h6 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        dev = abs(_h_osc(q, p, om2, d0) - e0)
        if dev > dev_max:
            dev_max = dev
            dev_step = s
        if flag_step < 0 and float(np.dot(q[:d0], q[:d0])) > radius * radius:
            flag_step = s
        if si < nsamp and s == sample_steps[si]:
            out_q[si] = q
            out_p[si] = p
            si += 1
    return flag_step, blow_step, dev_max, dev_step, q, p
