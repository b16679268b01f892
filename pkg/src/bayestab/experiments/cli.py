"""Command line entry point: ``bayestab <subcommand>``.

Subcommands
-----------
run-one      one stabilization run, JSON outcome on stdout
sweep        ``--fig {1,2,3,4}`` or ``--config FILE``; writes CSV + SVG
simulate     trajectory CSV under random feedback and dither
care-check   solve the Riccati equation and report the residual

Exit status is 0 on success, 1 for configuration errors and 2 for runtime
(I/O or numerical) errors.  ``BAYESTAB_OUT_DIR`` sets the default output
directory.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..errors import BayestabError, ConfigError, InputError
from ..linalg_control import lqr, spectral_abscissa
from ..sde_sim import DynamicsModel, PolicySchedule, make_dither, simulate, write_trajectory_csv
from ..stabilizer import StabilizationConfig, make_streams, run_algorithm1, sample_feedback
from .harness import (
    SWEEP_VARIABLES,
    SweepSpec,
    default_truth,
    figure_spec,
    run_sweep,
    write_csv,
)
from .plotting import render_plot

log = logging.getLogger("bayestab")

OUT_DIR_ENV = "BAYESTAB_OUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

FIGURE_METRICS = {
    1: ("err_median",),
    2: ("success_rate",),
    3: ("success_rate",),
    4: ("success_rate", "sampled_abscissa_median"),
}

_CONFIG_KEYS = {"tau", "n_periods", "sigma_L", "sigma_eta", "epsilon", "dt", "r",
                "seed", "overflow_bound", "replicates", "sweep"}
_SWEEP_KEYS = {"id", "variable", "values", "n_values", "panel", "panel_values"}


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


_GLOBAL_DEFAULTS = {"seed": 0, "replicates": 100, "dt": 1e-3, "out_dir": None,
                    "parallelism": 1, "verbose": False}


def _global_flags():
    # SUPPRESS lets the flags appear before or after the subcommand.
    parent = argparse.ArgumentParser(add_help=False)
    g = parent.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    g.add_argument("--replicates", type=int, default=argparse.SUPPRESS)
    g.add_argument("--dt", type=float, default=argparse.SUPPRESS)
    g.add_argument("--out-dir", default=argparse.SUPPRESS,
                   help=f"output directory (default: ${OUT_DIR_ENV} or ./results)")
    g.add_argument("--parallelism", type=int, default=argparse.SUPPRESS)
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return parent


def _run_flags(p):
    p.add_argument("--tau", type=float, default=8.0)
    p.add_argument("--sigma-l", dest="sigma_L", type=float, default=1.0)
    p.add_argument("--sigma-eta", type=float, default=1.0)
    p.add_argument("--n", dest="n_periods", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--r", type=float, default=1.0)


def build_parser():
    common = _global_flags()
    parser = _ArgumentParser(prog="bayestab", parents=[common],
                             description="Bayesian learning to stabilize linear SDEs")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("run-one", parents=[common], help="single stabilization run")
    _run_flags(p)

    p = sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--fig", type=int, choices=(1, 2, 3, 4))
    src.add_argument("--config", type=Path)

    p = sub.add_parser("simulate", parents=[common], help="write one trajectory as CSV")
    _run_flags(p)
    p.add_argument("--output", type=Path, help="CSV path (default: <out-dir>/trajectory.csv)")
    p.add_argument("--stdout", action="store_true", help="write the CSV to stdout")

    p = sub.add_parser("care-check", parents=[common], help="Riccati solve + residual")
    p.add_argument("--matrices", type=Path,
                   help="JSON file with A, B and optional Q, R (default: benchmark system)")
    p.add_argument("--r", type=float, default=1.0)
    return parser


def _out_dir(args):
    out = args.out_dir or os.environ.get(OUT_DIR_ENV) or "results"
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory {path} is not writable")
    return path


def _config_from_args(args):
    return StabilizationConfig(tau=args.tau, n_periods=args.n_periods, sigma_L=args.sigma_L,
                               sigma_eta=args.sigma_eta, epsilon=args.epsilon, dt=args.dt,
                               seed=args.seed).with_r(args.r)


def cmd_run_one(args):
    truth = default_truth()
    cfg = _config_from_args(args).validate(truth.p, truth.q)
    out = run_algorithm1(truth, cfg)
    record = out.to_dict()
    record["config"] = {"tau": cfg.tau, "n_periods": cfg.n_periods, "sigma_L": cfg.sigma_L,
                        "sigma_eta": cfg.sigma_eta, "epsilon": cfg.epsilon, "dt": cfg.dt,
                        "r": args.r, "seed": cfg.seed}
    print(json.dumps(record, indent=2))
    return EXIT_OK


def load_sweep_config(path, replicates=None, seed=None, dt=None):
    """Build a ``SweepSpec`` from a TOML file.

    Top-level keys set the base configuration (``tau``, ``n_periods``,
    ``sigma_L``, ``sigma_eta``, ``epsilon``, ``dt``, ``r``, ``seed``,
    ``overflow_bound``, ``replicates``); the ``[sweep]`` table names the
    swept ``variable`` with its ``values`` and optionally ``n_values`` (one
    curve each) and a ``panel`` variable with ``panel_values``.
    """
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    sweep = data.get("sweep")
    if not isinstance(sweep, dict):
        raise ConfigError(f"{path}: missing [sweep] table")
    unknown = set(sweep) - _SWEEP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown [sweep] keys {sorted(unknown)}")

    try:
        base = StabilizationConfig(
            tau=float(data.get("tau", 8.0)), n_periods=int(data.get("n_periods", 4)),
            sigma_L=float(data.get("sigma_L", 1.0)), sigma_eta=float(data.get("sigma_eta", 1.0)),
            epsilon=float(data.get("epsilon", 0.2)),
            dt=float(dt if dt is not None else data.get("dt", 1e-3)),
            overflow_bound=float(data.get("overflow_bound", 1e8)),
        ).with_r(float(data.get("r", 1.0)))
        variable = sweep["variable"]
        values = list(sweep["values"])
        n_values = [int(n) for n in sweep.get("n_values", [base.n_periods])]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: invalid value: {exc}") from exc
    if variable not in SWEEP_VARIABLES:
        raise ConfigError(f"{path}: cannot sweep {variable!r}; choose from {sorted(SWEEP_VARIABLES)}")
    if not values:
        raise ConfigError(f"{path}: sweep.values is empty")

    panel = sweep.get("panel")
    panel_values = list(sweep.get("panel_values", []))
    if panel is not None and (panel not in SWEEP_VARIABLES or not panel_values):
        raise ConfigError(f"{path}: panel needs a sweepable variable and panel_values")

    def setting(name, value):
        if name == "r":
            return {"r_weight": float(value)}
        if name == "n":
            return {"n_periods": int(value)}
        return {SWEEP_VARIABLES[name]: float(value)}

    grid = []
    for pv in (panel_values if panel else [None]):
        for n in n_values:
            for v in values:
                cfg = replace(base, n_periods=n)
                if panel:
                    cfg = replace(cfg, **setting(panel, pv))
                grid.append(replace(cfg, **setting(variable, v)))
    return SweepSpec(
        sweep_id=str(sweep.get("id", Path(path).stem)), variable=variable, grid=grid,
        replicates=int(replicates if replicates is not None else data.get("replicates", 100)),
        base_seed=int(seed if seed is not None else data.get("seed", 0)), panel=panel)


def cmd_sweep(args, explicit):
    out_dir = _out_dir(args)
    replicates = args.replicates if "replicates" in explicit else None
    seed = args.seed if "seed" in explicit else None
    if args.fig is not None:
        spec = figure_spec(args.fig, replicates=args.replicates, base_seed=args.seed, dt=args.dt)
        metrics = FIGURE_METRICS[args.fig]
    else:
        spec = load_sweep_config(args.config, replicates=replicates, seed=seed,
                                 dt=args.dt if "dt" in explicit else None)
        metrics = ("success_rate", "err_median")
    for cfg in spec.grid:
        cfg.validate(spec.truth.p, spec.truth.q)
    results = run_sweep(spec, parallelism=args.parallelism)
    csv_path = out_dir / f"{spec.sweep_id}.csv"
    write_csv(results, csv_path)
    print(csv_path)
    for metric in metrics:
        svg_path = out_dir / f"{spec.sweep_id}_{metric}.svg"
        render_plot(results, metric, svg_path)
        print(svg_path)
    return EXIT_OK


def cmd_simulate(args):
    truth = default_truth()
    cfg = _config_from_args(args).validate(truth.p, truth.q)
    g_feedback, g_dither, g_noise, _ = make_streams(cfg.seed)
    K = np.stack([sample_feedback(cfg.sigma_L, truth.p, truth.q, g_feedback)
                  for _ in range(cfg.n_periods)])
    schedule = PolicySchedule(K, cfg.tau / cfg.n_periods, cfg.sigma_eta,
                              make_dither(cfg.epsilon, cfg.tau, g_dither, q=truth.q))
    traj = simulate(truth, schedule, dt=cfg.dt, tau=cfg.tau, rng=g_noise,
                    overflow_bound=cfg.overflow_bound)
    if args.stdout:
        write_trajectory_csv(traj, sys.stdout)
    else:
        path = args.output or _out_dir(args) / "trajectory.csv"
        try:
            write_trajectory_csv(traj, path)
        except OSError as exc:
            raise OSError(f"cannot write trajectory to {path}: {exc}") from exc
        print(path)
    if traj.overflowed:
        log.warning("trajectory overflowed at t=%g", traj.times[-1])
    return EXIT_OK


def _load_matrices(path, r):
    if path is None:
        truth = default_truth()
        A, B = truth.A, truth.B
        return A, B, np.eye(A.shape[0]), r * np.eye(B.shape[1])
    try:
        with open(path) as fh:
            data = json.load(fh)
        A = np.array(data["A"], dtype=float)
        B = np.array(data["B"], dtype=float, ndmin=2)
        Q = np.array(data["Q"], dtype=float) if "Q" in data else np.eye(A.shape[0])
        R = np.array(data["R"], dtype=float) if "R" in data else r * np.eye(B.shape[1])
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"malformed matrices file {path}: {exc}") from exc
    return A, B, Q, R


def cmd_care_check(args):
    A, B, Q, R = _load_matrices(args.matrices, args.r)
    K, sol = lqr(A, B, Q, R)
    report = {
        "residual_norm": sol.residual_norm,
        "iterations": sol.iterations,
        "closed_loop_abscissa": spectral_abscissa(A + B @ K),
        "min_eig_P": float(np.min(np.linalg.eigvalsh(sol.P))),
        "P": sol.P.tolist(),
        "K": K.tolist(),
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    explicit = set(vars(args))
    for key, value in _GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run-one":
            return cmd_run_one(args)
        if args.command == "sweep":
            return cmd_sweep(args, explicit)
        if args.command == "simulate":
            return cmd_simulate(args)
        return cmd_care_check(args)
    except (ConfigError, InputError) as exc:
        print(f"bayestab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, BayestabError) as exc:
        print(f"bayestab: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
