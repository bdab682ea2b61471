"""Command-line driver.

Subcommands write CSV files into ``--out``:

- ``simulate``: ``trajectory.csv`` for the base scenario
- ``sweep``: ``trajectory_<k>.csv`` per sweep value plus ``metrics.csv``
- ``steady``: ``steady.csv``
- ``oracle``: ``ensemble.csv`` and ``comparison.csv`` (ensemble vs DDE)
- ``dexp``: ``dexp.csv`` with phi, psi and rho on a uniform grid
"""

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import csvio
from .config import load_config
from .ctrw_oracle import OracleConfig, ensemble_mean, max_step
from .dde_core import sample
from .delay_exponential import DexpParams, E_INV, density_curve, infectivity_curve, survival_curve
from .errors import ConfigError, DelaySIRError
from .metrics import detect_peaks
from .sir_models import endemic_exists, endemic_formula, simulate, steady_disease_free


def _run_one(cfg, params):
    return simulate(params, cfg.initial, cfg.t_end, cfg.n_sub, cfg.record_every)


def _sweep_job(args):
    cfg, params = args
    traj = _run_one(cfg, params)
    m = detect_peaks(traj, "I", cfg.metrics.prominence, cfg.metrics.sustain)
    return traj, m


def cmd_simulate(cfg, out, workers=1):
    traj = _run_one(cfg, cfg.params)
    path = os.path.join(out, "trajectory.csv")
    csvio.write_trajectory(path, traj)
    return [path]


def cmd_sweep(cfg, out, workers=1):
    if cfg.sweep is None:
        raise ConfigError("sweep requires a 'sweep' section")
    cases = cfg.swept()
    jobs = [(cfg, p) for _, p in cases]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(job) for job in jobs]
    paths = []
    for k, (traj, _) in enumerate(results):
        path = os.path.join(out, f"trajectory_{k}.csv")
        csvio.write_trajectory(path, traj)
        paths.append(path)
    path = os.path.join(out, "metrics.csv")
    csvio.write_metrics(path, [(v, m) for (v, _), (_, m) in zip(cases, results)])
    paths.append(path)
    return paths


def cmd_steady(cfg, out, workers=1):
    p = cfg.params
    exists = endemic_exists(p)
    points = [steady_disease_free(p), endemic_formula(p)]
    path = os.path.join(out, "steady.csv")
    csvio.write_steady(path, points, exists)
    return [path]


def oracle_config(cfg, seed=None):
    """:class:`OracleConfig` for a scenario; initial counts must be integers."""
    ospec = cfg.oracle
    if ospec is None:
        raise ConfigError("oracle requires an 'oracle' section")
    counts = [cfg.initial.s, cfg.initial.i, cfg.initial.r]
    if any(c != int(c) for c in counts):
        raise ConfigError("initial counts must be integers for the oracle")
    s0, i0, r0 = (int(c) for c in counts)
    dt = ospec.dt if ospec.dt is not None else max_step(cfg.params, s0 + i0 + r0)
    t_end = ospec.t_end if ospec.t_end is not None else cfg.t_end
    return OracleConfig(
        cfg.params, dt, s0, i0, r0, t_end, ospec.replicates,
        ospec.seed if seed is None else seed,
    )


def cmd_oracle(cfg, out, workers=1, seed=None):
    ocfg = oracle_config(cfg, seed)
    stats = ensemble_mean(ocfg, workers=workers)
    path_e = os.path.join(out, "ensemble.csv")
    csvio.write_ensemble(path_e, stats)
    traj = simulate(cfg.params, cfg.initial, ocfg.t_end, cfg.n_sub)
    dde_i = np.array([sample(traj, t, "I") for t in stats.times])
    path_c = os.path.join(out, "comparison.csv")
    csvio.write_comparison(path_c, stats.times, stats.mean[:, 1], stats.stderr[:, 1], dde_i)
    return [path_e, path_c]


def cmd_dexp(mu, tau, tau1, t_max, points, out):
    p = DexpParams(mu, tau)
    t = np.linspace(0.0, t_max, points)
    path = os.path.join(out, "dexp.csv")
    csvio.write_dexp(
        path, t, survival_curve(t, p), density_curve(t, p), infectivity_curve(t, mu, tau1, tau)
    )
    return [path]


def _mu_arg(text):
    return text if text == "critical" else float(text)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="delaysir", description="Delay-infectivity / delay-recovery SIR model."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("simulate", "integrate the base scenario"),
        ("sweep", "integrate every sweep value and summarise"),
        ("steady", "report both steady states"),
        ("oracle", "agent-based ensemble and DDE comparison"),
    ):
        cmd = sub.add_parser(name, help=helptext)
        cmd.add_argument("--config", required=True, help="JSON scenario file")
        cmd.add_argument("--out", default=".", help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="override the oracle seed")
        cmd.add_argument("--workers", type=int, default=1, help="worker processes")
    cmd = sub.add_parser("dexp", help="tabulate phi, psi and rho")
    cmd.add_argument("--mu", type=_mu_arg, required=True, help="rate, or 'critical' for 1/(e tau)")
    cmd.add_argument("--tau", type=float, required=True, help="recovery delay")
    cmd.add_argument("--tau1", type=float, default=0.0, help="infectivity delay for rho")
    cmd.add_argument("--t-max", type=float, default=10.0)
    cmd.add_argument("--points", type=int, default=1001)
    cmd.add_argument("--out", default=".", help="output directory")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        os.makedirs(args.out, exist_ok=True)
        if args.command == "dexp":
            mu = args.mu
            if mu == "critical":
                if args.tau <= 0:
                    raise ConfigError("--mu critical needs --tau > 0")
                mu = E_INV / args.tau
            if args.points < 2 or not (math.isfinite(args.t_max) and args.t_max > 0):
                raise ConfigError("--points must be >= 2 and --t-max > 0")
            paths = cmd_dexp(mu, args.tau, args.tau1, args.t_max, args.points, args.out)
        else:
            cfg = load_config(args.config)
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            if args.command == "oracle":
                paths = cmd_oracle(cfg, args.out, args.workers, args.seed)
            else:
                handler = {"simulate": cmd_simulate, "sweep": cmd_sweep, "steady": cmd_steady}
                paths = handler[args.command](cfg, args.out, args.workers)
    except (DelaySIRError, ArithmeticError, OSError) as exc:
        print(f"delaysir {args.command}: error: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
