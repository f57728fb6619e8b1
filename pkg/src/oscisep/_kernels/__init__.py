"""Hot-loop kernels: compiled extension with a pure-numpy fallback.

The compiled module is selected at import; set OSCISEP_PURE_PYTHON=1 to
force the fallback.  Both expose the same march functions, dispatched
through run_trig / run_rk4 below.
"""

import os

import numpy as np

if os.environ.get("OSCISEP_PURE_PYTHON"):
    from . import fallback as impl

    HAVE_COMPILED = False
else:
    try:
        from . import _core as _compiled

        impl = _compiled
        HAVE_COMPILED = True
    except ImportError:
        from . import fallback as impl

        HAVE_COMPILED = False


def trig_coefficients(omega_flat, h):
    """Per-dof cos(h*w), sin(h*w)/w, w*sin(h*w), h^2/2*sinc(h*w), with the
    w=0 limits (1, h, 0, h^2/2) on the slow block."""
    om = np.asarray(omega_flat, dtype=float)
    hw = h * om
    cosd = np.cos(hw)
    sin_hw = np.sin(hw)
    nz = om != 0.0
    sino = np.full_like(om, h)
    np.divide(sin_hw, om, out=sino, where=nz)
    wsin = om * sin_hw
    hhs = 0.5 * h * sino
    return cosd, sino, wsin, hhs


def run_trig(q, p, h, nsteps, omega_flat, w, quad, d0, radius,
             sample_steps, out_q, out_p, module=None):
    """March the trigonometric scheme.

    Returns (flag_step, blow_step, dev_max, dev_step, q, p) where dev_max is
    the per-step oscillatory-energy deviation max_s |H_osc(s) - H_osc(0)|.
    """
    mod = module if module is not None else impl
    cosd, sino, wsin, hhs = trig_coefficients(omega_flat, h)
    om2 = np.asarray(omega_flat, float) ** 2
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    res = mod.trig_march(q, p, float(h), int(nsteps), cosd, sino, wsin, hhs,
                         np.asarray(w, float), np.asarray(quad, float),
                         om2, int(d0), float(radius),
                         np.asarray(sample_steps, np.int64), out_q, out_p)
    if len(res) == 4:  # compiled module mutates in place
        return res[0], res[1], res[2], res[3], q, p
    return res


def run_rk4(q, p, h, nsteps, omega_flat, w, quad, d0, radius,
            sample_steps, out_q, out_p, module=None):
    """March classical RK4; same contract as run_trig."""
    mod = module if module is not None else impl
    om2 = np.asarray(omega_flat, float) ** 2
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    res = mod.rk4_march(q, p, float(h), int(nsteps), om2,
                        np.asarray(w, float), np.asarray(quad, float),
                        int(d0), float(radius),
                        np.asarray(sample_steps, np.int64), out_q, out_p)
    if len(res) == 4:
        return res[0], res[1], res[2], res[3], q, p
    return res
