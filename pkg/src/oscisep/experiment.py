"""Experiment driver: configs, long runs, deviation tables, sweeps, reports.

Reproduces the reference experiments: n = 7 fast modes with eps*omega =
(1, 1+eps^2, 1+eps, 1+eps^(3/4), 1+eps^(2/3), 1+eps^(1/2), 2), the cubic
coupling potential with parameter a, step size h = dt_factor * eps, and the
maximal deviation of the oscillatory energy over [0, t_end].
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import json
import os
import time

import numpy as np

from . import mfe
from .integrator import EnergyBlowupError, IntegratorConfig, integrate
from .model import BlockVector, SystemConfig, energies, example_potential
from .resonance import enumerate_multi_indices

__all__ = [
    "ConfigError",
    "DeviationRow",
    "ExperimentConfig",
    "SweepResult",
    "default_freq_spec",
    "deviation_from_csv",
    "load_config",
    "mfe_diagnose",
    "parse_config_text",
    "resonance_report",
    "simulate",
    "sweep",
    "write_energies_csv",
]

#: initial data of the reference experiments (positions scale with eps)
REFERENCE_Q0_SLOW = 1.0
REFERENCE_Q0_FAST = (0.3, 0.4, 0.7, -1.1, 0.4, -0.6, -0.7)
REFERENCE_P0 = (-0.2, 0.6, 0.7, -0.9, -0.9, 0.4, -1.1, 0.8)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def default_freq_spec(epsilon: float):
    """The reference eps*omega_j list."""
    e = epsilon
    return (1.0, 1.0 + e ** 2, 1.0 + e, 1.0 + e ** 0.75,
            1.0 + e ** (2.0 / 3.0), 1.0 + e ** 0.5, 2.0)


@dataclasses.dataclass
class ExperimentConfig:
    epsilon: float = 0.005
    a: float | str = 0.5            # the literal token "epsilon" means a = eps
    freq_spec: tuple | None = None  # eps*omega_j values; None = reference list
    q0: tuple | None = None         # None = reference initial positions
    p0: tuple | None = None
    t_end: float = 100_000.0
    dt_factor: float = 0.01
    record_stride: int | None = None
    num_samples: int = 10_000
    N: int = 1
    monitor_radius: float = 2.0
    output_path: str = "."

    def validate(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ConfigError("epsilon must lie in (0, 1)")
        if not self.dt_factor > 0:
            raise ConfigError("dt_factor must be positive")
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if isinstance(self.a, str) and self.a != "epsilon":
            raise ConfigError(f"a must be a number or 'epsilon', got {self.a!r}")
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        if self.record_stride is not None and self.record_stride < 1:
            raise ConfigError("record_stride must be >= 1")
        return self

    @property
    def a_value(self) -> float:
        return self.epsilon if self.a == "epsilon" else float(self.a)

    def freq_values(self):
        spec = self.freq_spec or default_freq_spec(self.epsilon)
        return np.asarray(spec, dtype=float)

    @property
    def n(self):
        return len(self.freq_values())

    def build_system(self) -> SystemConfig:
        self.validate()
        eps_omega = self.freq_values()
        omega = eps_omega / self.epsilon
        n = len(eps_omega)
        pot = example_potential(self.a_value, self.epsilon)
        if n != len(pot.dims) - 1:
            raise ConfigError(
                f"freq_spec lists {n} modes but the potential couples "
                f"{len(pot.dims) - 1}")
        return SystemConfig(n=n, dims=(1,) * (n + 1), epsilon=self.epsilon,
                            omega=omega, potential=pot,
                            monitor_radius=self.monitor_radius)

    def initial_state(self):
        e = self.epsilon
        n = self.n
        if self.q0 is not None:
            q = [[float(v)] for v in self.q0]
        else:
            q = [[REFERENCE_Q0_SLOW]] + [[c * e] for c in REFERENCE_Q0_FAST[:n]]
        if self.p0 is not None:
            p = [[float(v)] for v in self.p0]
        else:
            p = [[c] for c in REFERENCE_P0[:n + 1]]
        if len(q) != n + 1 or len(p) != n + 1:
            raise ConfigError("q0/p0 must list n+1 entries")
        return BlockVector(p), BlockVector(q)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


# --------------------------------------------------------------------------
# flat key = value config files


def _parse_value(text: str):
    text = text.strip()
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return ()
        return tuple(_parse_value(v) for v in inner.split(","))
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text  # bare token, e.g. epsilon


def parse_config_text(text: str) -> ExperimentConfig:
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    kw = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kw[key] = _parse_value(value)
    cfg = ExperimentConfig(**kw)
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


# --------------------------------------------------------------------------
# simulate / sweep


@dataclasses.dataclass
class DeviationRow:
    epsilon: float
    a: float
    deviation: float          # per-step max |H_osc(t) - H_osc(0)|
    t_at_max: float
    steps: int
    wall_time: float
    deviation_sampled: float = 0.0  # max over the CSV's recorded samples
    flag_time: float | None = None


def write_energies_csv(path, traj, n_modes: int):
    cols = ["t"] + [f"E_{j}" for j in range(1, n_modes + 1)]
    cols += ["H_osc", "H_slow", "H_total"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        data = np.column_stack([traj.times, traj.per_mode, traj.h_osc,
                                traj.h_slow, traj.h_total])
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def deviation_from_csv(path):
    """Recompute the deviation from a written CSV (post-hoc audit)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        it = header.index("t")
        ih = header.index("H_osc")
        dev = 0.0
        t_at = 0.0
        h0 = None
        for line in fh:
            parts = line.split(",")
            t = float(parts[it])
            h = float(parts[ih])
            if h0 is None:
                h0 = h
            d = abs(h - h0)
            if d > dev:
                dev = d
                t_at = t
    return dev, t_at


def simulate(config: ExperimentConfig, out_dir=None, csv_name=None):
    """Run the trigonometric integrator; write energies.csv; return the row."""
    config.validate()
    sys = config.build_system()
    state0 = config.initial_state()
    h = config.dt_factor * config.epsilon
    iconf = IntegratorConfig(
        h=h, scheme="trigonometric",
        record_stride=config.record_stride or 1,
        num_samples=None if config.record_stride else config.num_samples)
    t0 = time.perf_counter()
    traj = integrate(state0, config.t_end, iconf, sys)
    wall = time.perf_counter() - t0
    dev_idx = int(np.argmax(np.abs(traj.h_osc - traj.h_osc[0])))
    row = DeviationRow(
        epsilon=config.epsilon, a=config.a_value,
        deviation=traj.deviation,
        t_at_max=traj.deviation_time,
        deviation_sampled=float(abs(traj.h_osc[dev_idx] - traj.h_osc[0])),
        steps=traj.steps, wall_time=wall, flag_time=traj.flag_time)
    out_dir = out_dir or config.output_path
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, csv_name or "energies.csv")
    write_energies_csv(csv_path, traj, sys.n)
    return row, csv_path


@dataclasses.dataclass
class SweepResult:
    rows: list
    errors: list       # (epsilon, message)
    slope: float | None
    table_path: str | None


def _sweep_one(args):
    cfg_dict, eps, out_dir = args
    cfg = ExperimentConfig(**cfg_dict).replace(epsilon=eps)
    name = f"energies_eps{eps:g}.csv"
    row, path = simulate(cfg, out_dir=out_dir, csv_name=name)
    return row


def sweep(config: ExperimentConfig, epsilons, out_dir=None, jobs=None) -> SweepResult:
    """simulate() per epsilon (process pool), deviation table + log-log slope."""
    if len(epsilons) < 1:
        raise ConfigError("sweep needs at least one epsilon")
    out_dir = out_dir or config.output_path
    os.makedirs(out_dir, exist_ok=True)
    cfg_dict = dataclasses.asdict(config)
    tasks = [(cfg_dict, float(e), out_dir) for e in epsilons]
    rows = []
    errors = []
    if jobs is not None and jobs <= 1:
        results = []
        for t in tasks:
            try:
                results.append(_sweep_one(t))
            except EnergyBlowupError as exc:
                errors.append((t[1], str(exc)))
        rows = results
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {pool.submit(_sweep_one, t): t[1] for t in tasks}
            for fut in concurrent.futures.as_completed(futs):
                eps = futs[fut]
                try:
                    rows.append(fut.result())
                except EnergyBlowupError as exc:
                    errors.append((eps, str(exc)))
                except Exception as exc:  # propagate context
                    errors.append((eps, f"{type(exc).__name__}: {exc}"))
    rows.sort(key=lambda r: -r.epsilon)
    slope = None
    if len(rows) >= 2 and all(r.deviation > 0 for r in rows):
        le = np.log([r.epsilon for r in rows])
        ld = np.log([r.deviation for r in rows])
        slope = float(np.polyfit(le, ld, 1)[0])
    table_path = os.path.join(out_dir, "deviation_table.csv")
    with open(table_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epsilon,a,deviation,t_at_max,deviation_sampled,steps\n")
        for r in rows:
            fh.write(f"{r.epsilon:.17g},{r.a:.17g},{r.deviation:.17g},"
                     f"{r.t_at_max:.17g},{r.deviation_sampled:.17g},{r.steps}\n")
    return SweepResult(rows=rows, errors=errors, slope=slope,
                       table_path=table_path)


# --------------------------------------------------------------------------
# resonance / mfe reports


def resonance_report(config: ExperimentConfig, N: int | None = None) -> dict:
    """Gap, R, basis, shifts, modified frequencies, K, and identity checks."""
    config.validate()
    sys = config.build_system()
    N = N if N is not None else config.N
    from .resonance import build_resonance_data
    data = build_resonance_data(sys.omega, sys.epsilon, N)
    gap = data.gap
    eps = sys.epsilon

    checks = {}
    lo, hi = gap.alpha, gap.alpha + gap.mu
    checks["gap_slot_empty"] = bool(
        not np.any((gap.occupied >= lo) & (gap.occupied <= hi)))
    tol = 1e-8 / eps
    checks["exact_resonance_on_R"] = bool(
        all(abs(k.dot(data.varpi)) <= tol for k in data.R))
    floor = 0.5 * eps ** (-gap.alpha - gap.mu)
    viol = [k.k for k in enumerate_multi_indices(data.n, N + 1)
            if k not in data.lattice and abs(k.dot(data.varpi)) < floor]
    checks["nonresonance_lower_bound"] = bool(not viol)
    checks["theta_norm_scaled_bounded"] = bool(data.theta_norm_scaled <= 10.0)

    return {
        "epsilon": eps,
        "N": N,
        "M_count": gap.m_count,
        "mu": gap.mu,
        "alpha": gap.alpha,
        "effective_mu": gap.effective_mu,
        "R": [list(k.k) for k in data.R],
        "basis": [list(k.k) for k in data.basis],
        "theta": data.theta.tolist(),
        "varpi": data.varpi.tolist(),
        "hnf": [list(r) for r in data.lattice.basis],
        "K": [list(k.k) for k in data.K_set],
        "theta_norm_scaled": data.theta_norm_scaled,
        "checks": checks,
    }


def format_resonance_report(rep: dict) -> str:
    lines = [
        f"epsilon = {rep['epsilon']:g}, N = {rep['N']}",
        f"M = {rep['M_count']} multi-indices of norm <= N+1",
        f"mu = {rep['mu']:.6g}, alpha = {rep['alpha']:.6g}, "
        f"effective gap width = {rep['effective_mu']:.6g}",
        f"R ({len(rep['R'])} members): " + ", ".join(str(tuple(k)) for k in rep["R"]),
        f"basis: " + ", ".join(str(tuple(k)) for k in rep["basis"]),
        f"theta = {np.array2string(np.array(rep['theta']), precision=6)}",
        f"varpi = {np.array2string(np.array(rep['varpi']), precision=6)}",
        f"|theta|*eps^alpha = {rep['theta_norm_scaled']:.4g}",
        f"module HNF rows: " + (", ".join(str(tuple(r)) for r in rep["hnf"]) or "(trivial)"),
        f"K ({len(rep['K'])} representatives): "
        + ", ".join(str(tuple(k)) for k in rep["K"]),
        "identity checks: " + ", ".join(
            f"{k}={'pass' if v else 'FAIL'}" for k, v in rep["checks"].items()),
    ]
    return "\n".join(lines)


def mfe_diagnose(config: ExperimentConfig, windows: int,
                 N: int | None = None, out_dir=None,
                 source_h_factor: float = 0.001) -> dict:
    """Window-patched construction diagnostics: defects per sweep,
    coefficient sizes, the almost-invariant against H_osc, jumps."""
    config.validate()
    if windows < 1:
        raise ConfigError("windows must be >= 1")
    sys = config.build_system()
    N = N if N is not None else config.N
    state0 = config.initial_state()
    problem = mfe.build_problem(sys, N=N)
    source = mfe.reference_source(sys, h_factor=source_h_factor)
    series = mfe.track_invariant(source, problem, state0, windows)

    # one reference construction for the defect/coefficient tables
    z, rep = mfe.construct(state0, problem)
    table = z.coefficient_table()

    windows_out = []
    for rec in series:
        windows_out.append({
            "window": rec.window, "t_start": rec.t_start, "t_end": rec.t_end,
            "e_start": rec.e_start, "e_end": rec.e_end, "drift": rec.drift,
            "jump": rec.jump, "h_osc_start": rec.h_osc_start,
            "h_osc_end": rec.h_osc_end, "defect_sup": rec.defect_sup,
            "sweeps": rec.sweeps,
        })
    drifts = [r.drift for r in series]
    jumps = [r.jump for r in series if r.jump is not None]
    gaps = [abs(r.e_start - r.h_osc_start) for r in series]
    report = {
        "epsilon": sys.epsilon,
        "a": config.a_value,
        "N": N,
        "alpha": problem.alpha,
        "window_length": problem.window,
        "windows": windows_out,
        "defect_history": rep.history,
        "final_defect": rep.sup,
        "stop_reason": rep.stop_reason,
        "max_tail_ratio": z.max_tail_ratio(),
        "coefficients": table,
        "max_drift": max(drifts),
        "max_jump": max(jumps) if jumps else 0.0,
        "sum_drift_jump": float(sum(drifts) + sum(jumps)),
        "max_e_vs_hosc": max(gaps),
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "mfe_report.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
        with open(os.path.join(out_dir, "invariant_series.csv"), "w",
                  encoding="utf-8", newline="") as fh:
            fh.write("window,t_start,t_end,e_start,e_end,drift,jump,"
                     "h_osc_start,h_osc_end,defect_sup,sweeps\n")
            for r in series:
                jump = "" if r.jump is None else f"{r.jump:.17g}"
                fh.write(f"{r.window},{r.t_start:.17g},{r.t_end:.17g},"
                         f"{r.e_start:.17g},{r.e_end:.17g},{r.drift:.17g},"
                         f"{jump},{r.h_osc_start:.17g},{r.h_osc_end:.17g},"
                         f"{r.defect_sup:.17g},{r.sweeps}\n")
    return report
