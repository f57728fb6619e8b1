"""Time integration: the symmetric one-step trigonometric scheme used for
the long-run experiments, plus a classical fourth-order reference method.

The trigonometric scheme solves the harmonic part exactly,

    q+ = cos(hW) q + W^-1 sin(hW) p + h^2/2 sinc(hW) g(q),
    p+ = -W sin(hW) q + cos(hW) p + h/2 (cos(hW) g(q) + g(q+)),

with W = diag(omega_j), g = -grad U, and the omega_0 = 0 block reducing to
Stoermer-Verlet.  Frequencies are constant, so cos/sin of h*omega are
precomputed once per run; production marches go through the compiled
kernels when the potential is in the kernel family.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import _kernels
from .model import BlockVector, SystemConfig, energy_series

__all__ = [
    "EnergyBlowupError",
    "IntegratorConfig",
    "Trajectory",
    "final_state",
    "integrate",
    "reference_integrate",
    "trig_step",
]


class EnergyBlowupError(RuntimeError):
    """Raised when a march hits non-finite state: the energies explode."""

    def __init__(self, t, step):
        super().__init__(
            f"energies explode: non-finite state at t = {t:.6g} (step {step})")
        self.t = t
        self.step = step


@dataclasses.dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step march configuration."""

    h: float
    scheme: str = "trigonometric"
    record_stride: int = 1
    num_samples: int | None = None  # overrides record_stride when set
    store_states: bool = False

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step size must be positive")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.scheme not in ("trigonometric", "reference"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclasses.dataclass
class Trajectory:
    """Recorded samples of one march."""

    times: np.ndarray
    per_mode: np.ndarray     # (samples, n)
    h_osc: np.ndarray
    h_slow: np.ndarray
    h_total: np.ndarray
    flag_time: float | None  # first march time with |q_0| > monitor_radius
    h: float
    steps: int
    scheme: str
    deviation: float = 0.0       # per-step max |H_osc(t) - H_osc(0)|
    deviation_time: float = 0.0
    states: tuple | None = None  # (P, Q) arrays when requested


def _sample_plan(nsteps, record_stride, num_samples):
    if num_samples is not None:
        num = max(2, min(num_samples, nsteps + 1))
        return np.unique(np.round(np.linspace(0, nsteps, num)).astype(np.int64))
    s = np.arange(0, nsteps + 1, record_stride, dtype=np.int64)
    if s[-1] != nsteps:
        s = np.append(s, nsteps)
    return s


def trig_step(state, h, config: SystemConfig):
    """One step of the trigonometric scheme; state = (p, q) BlockVectors."""
    p, q = state
    config.check_state(p, "p")
    config.check_state(q, "q")
    cosd, sino, wsin, hhs = _kernels.trig_coefficients(config.omega_flat, h)
    qf = q.flat()
    pf = p.flat()
    g = -config.potential.gradient_flat(qf, config.dims)
    qn = cosd * qf + sino * pf + hhs * g
    gn = -config.potential.gradient_flat(qn, config.dims)
    pn = -wsin * qf + cosd * pf + 0.5 * h * (cosd * g + gn)
    return (BlockVector.from_flat(pn, config.dims),
            BlockVector.from_flat(qn, config.dims))


def _python_march(pf, qf, h, nsteps, config, sample_steps, out_q, out_p, scheme):
    """Generic-potential march (no kernel family); per-step numpy."""
    dims = config.dims
    om = config.omega_flat
    om2 = om ** 2
    d0 = dims[0]
    flag_step = -1
    blow_step = -1
    dev_max = 0.0
    dev_step = 0
    si = 0
    if sample_steps[0] == 0:
        out_q[0] = qf
        out_p[0] = pf
        si = 1
    if np.dot(qf[:d0], qf[:d0]) > config.monitor_radius ** 2:
        flag_step = 0

    def h_osc(q, p):
        return 0.5 * float(np.dot(p[d0:], p[d0:]) + np.dot(om2[d0:] * q[d0:], q[d0:]))

    e0 = h_osc(qf, pf)
    grad = config.potential.gradient_flat
    if scheme == "trigonometric":
        cosd, sino, wsin, hhs = _kernels.trig_coefficients(om, h)
        g = -grad(qf, dims)
        for s in range(1, nsteps + 1):
            qn = cosd * qf + sino * pf + hhs * g
            if not np.all(np.isfinite(qn)):
                blow_step = s
                break
            gn = -grad(qn, dims)
            pf = -wsin * qf + cosd * pf + 0.5 * h * (cosd * g + gn)
            qf = qn
            g = gn
            dev = abs(h_osc(qf, pf) - e0)
            if dev > dev_max:
                dev_max = dev
                dev_step = s
            if flag_step < 0 and np.dot(qf[:d0], qf[:d0]) > config.monitor_radius ** 2:
                flag_step = s
            if si < len(sample_steps) and s == sample_steps[si]:
                out_q[si] = qf
                out_p[si] = pf
                si += 1
    else:
        def acc(x):
            return -om2 * x - grad(x, dims)

        for s in range(1, nsteps + 1):
            k1p = acc(qf)
            k2q = pf + 0.5 * h * k1p
            k2p = acc(qf + 0.5 * h * pf)
            k3q = pf + 0.5 * h * k2p
            k3p = acc(qf + 0.5 * h * k2q)
            k4q = pf + h * k3p
            k4p = acc(qf + h * k3q)
            qf = qf + h / 6.0 * (pf + 2 * k2q + 2 * k3q + k4q)
            pf = pf + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
            if not np.all(np.isfinite(qf)):
                blow_step = s
                break
            dev = abs(h_osc(qf, pf) - e0)
            if dev > dev_max:
                dev_max = dev
                dev_step = s
            if flag_step < 0 and np.dot(qf[:d0], qf[:d0]) > config.monitor_radius ** 2:
                flag_step = s
            if si < len(sample_steps) and s == sample_steps[si]:
                out_q[si] = qf
                out_p[si] = pf
                si += 1
    return flag_step, blow_step, dev_max, dev_step, qf, pf


def integrate(state0, t_end, iconf: IntegratorConfig, config: SystemConfig) -> Trajectory:
    """Fixed-step march from state0 = (p, q) to t_end, recording samples."""
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    p0, q0 = state0
    config.check_state(p0, "p")
    config.check_state(q0, "q")
    h = iconf.h
    nsteps = max(1, int(round(t_end / h)))
    sample_steps = _sample_plan(nsteps, iconf.record_stride, iconf.num_samples)
    D = config.total_dim
    out_q = np.empty((len(sample_steps), D))
    out_p = np.empty((len(sample_steps), D))

    kp = config.potential.kernel_params(config.dims)
    if kp is not None:
        w, quad = kp
        runner = _kernels.run_trig if iconf.scheme == "trigonometric" else _kernels.run_rk4
        flag_step, blow_step, dev_max, dev_step, _, _ = runner(
            q0.flat(), p0.flat(), h, nsteps, config.omega_flat, w, quad,
            config.dims[0], config.monitor_radius, sample_steps, out_q, out_p)
    else:
        flag_step, blow_step, dev_max, dev_step, _, _ = _python_march(
            p0.flat(), q0.flat(), h, nsteps, config, sample_steps,
            out_q, out_p, iconf.scheme)

    if blow_step >= 0:
        raise EnergyBlowupError(blow_step * h, blow_step)

    times = sample_steps * h
    per_mode, h_osc, h_slow, h_total = energy_series(out_p, out_q, config)
    return Trajectory(
        times=times, per_mode=per_mode, h_osc=h_osc, h_slow=h_slow,
        h_total=h_total,
        flag_time=None if flag_step < 0 else flag_step * h,
        h=h, steps=nsteps, scheme=iconf.scheme,
        deviation=float(dev_max), deviation_time=dev_step * h,
        states=(out_p, out_q) if iconf.store_states else None,
    )


def reference_integrate(state0, t_end, config: SystemConfig, h_ref=None,
                        num_samples=None, store_states=False) -> Trajectory:
    """High-accuracy oracle march (classical RK4 with h <= 0.001*eps)."""
    if h_ref is None:
        h_ref = 0.001 * config.epsilon
    nsteps = max(1, int(np.ceil(t_end / h_ref)))
    h = t_end / nsteps
    iconf = IntegratorConfig(h=h, scheme="reference",
                             num_samples=num_samples,
                             record_stride=max(1, nsteps),
                             store_states=store_states)
    return integrate(state0, t_end, iconf, config)


def final_state(traj: Trajectory, config: SystemConfig):
    """(p, q) BlockVectors at the last recorded sample (requires states)."""
    if traj.states is None:
        raise ValueError("trajectory was recorded without states")
    P, Q = traj.states
    return (BlockVector.from_flat(P[-1], config.dims),
            BlockVector.from_flat(Q[-1], config.dims))
