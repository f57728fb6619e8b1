"""oscisep command line: simulate / sweep / resonance / mfe.

Exit codes: 0 success, 1 validation error, 2 numerical blow-up.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiment import (ConfigError, ExperimentConfig, format_resonance_report,
                         load_config, mfe_diagnose, resonance_report, simulate,
                         sweep)
from .integrator import EnergyBlowupError


def _base_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "epsilon", None) is not None:
        cfg = cfg.replace(epsilon=args.epsilon)
    if getattr(args, "a", None) is not None:
        a = args.a
        cfg = cfg.replace(a=a if a == "epsilon" else float(a))
    if getattr(args, "tmax", None) is not None:
        cfg = cfg.replace(t_end=args.tmax)
    if getattr(args, "dt_factor", None) is not None:
        cfg = cfg.replace(dt_factor=args.dt_factor)
    if getattr(args, "out", None) is not None:
        cfg = cfg.replace(output_path=args.out)
    cfg.validate()
    return cfg


def _cmd_simulate(args):
    cfg = _base_config(args)
    row, csv_path = simulate(cfg)
    print(f"epsilon = {row.epsilon:g}, a = {row.a:g}, steps = {row.steps}, "
          f"h = {cfg.dt_factor * cfg.epsilon:g}")
    print(f"max |H_osc(t) - H_osc(0)| = {row.deviation:.6e} at t = {row.t_at_max:.6g}")
    if row.flag_time is not None:
        print(f"note: |q_0| exceeded the monitor radius at t = {row.flag_time:.6g}")
    print(f"energies written to {csv_path}")
    return 0


def _cmd_sweep(args):
    cfg = _base_config(args)
    epsilons = [float(e) for e in args.epsilons.split(",") if e.strip()]
    if len(epsilons) < 2:
        raise ConfigError("sweep needs at least two epsilon values")
    res = sweep(cfg, epsilons, jobs=args.jobs)
    print("epsilon    deviation        t_at_max")
    for r in res.rows:
        print(f"{r.epsilon:<10g} {r.deviation:<16.6e} {r.t_at_max:g}")
    if res.slope is not None:
        print(f"log-log slope of deviation vs epsilon: {res.slope:.3f}")
    print(f"table written to {res.table_path}")
    if res.errors:
        for eps, msg in res.errors:
            print(f"error at epsilon = {eps:g}: {msg}", file=sys.stderr)
        return 2
    return 0


def _cmd_resonance(args):
    cfg = _base_config(args)
    rep = resonance_report(cfg, N=args.order)
    if args.json:
        print(json.dumps(rep, indent=2))
    else:
        print(format_resonance_report(rep))
    return 0 if all(rep["checks"].values()) else 1


def _cmd_mfe(args):
    cfg = _base_config(args)
    rep = mfe_diagnose(cfg, windows=args.windows, N=args.order,
                       out_dir=cfg.output_path)
    print(f"epsilon = {rep['epsilon']:g}, a = {rep['a']:g}, N = {rep['N']}, "
          f"window length = {rep['window_length']:.6g}")
    print(f"construction: {len(rep['defect_history'])} sweeps, final defect "
          f"{rep['final_defect']:.3e} ({rep['stop_reason']})")
    print(f"defect per sweep: " + ", ".join(f"{d:.2e}" for d in rep["defect_history"]))
    print(f"max |E - H_osc| over window starts: {rep['max_e_vs_hosc']:.4e}")
    print(f"max per-window drift: {rep['max_drift']:.3e}, "
          f"max jump: {rep['max_jump']:.3e}, "
          f"sum drift+jump: {rep['sum_drift_jump']:.3e}")
    print(f"reports written to {cfg.output_path}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="oscisep",
        description="Long-time energy separation in oscillatory Hamiltonian systems")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--a", help="coupling parameter (number or 'epsilon')")
        p.add_argument("--tmax", type=float)
        p.add_argument("--dt-factor", dest="dt_factor", type=float)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="one long run; writes energies.csv")
    add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="simulate per epsilon; deviation table")
    add_common(p)
    p.add_argument("--epsilons", required=True,
                   help="comma-separated list, e.g. 0.02,0.01,0.005")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("resonance", help="gap/module/modified-frequency report")
    add_common(p)
    p.add_argument("--order", type=int, default=1, help="truncation order N")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_resonance)

    p = sub.add_parser("mfe", help="modulated-Fourier diagnostics over windows")
    add_common(p)
    p.add_argument("--windows", type=int, required=True)
    p.add_argument("--order", type=int, default=1, help="truncation order N")
    p.set_defaults(func=_cmd_mfe)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EnergyBlowupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
