"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numeric/regime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bounds as bounds_mod
from . import harness
from .dynamics import ControlSystem, sensitivity_scan, simulate, trajectory_to_csv
from .errors import InputError, SysIdError
from .estimator import ols
from .noise import verify_tail

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to a JSON config file")
    common.add_argument("--seed", type=int, default=None, help="override the seed")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (fallback: ${harness.THREADS_ENV_VAR})")

    parser = argparse.ArgumentParser(
        prog="unstable-sysid",
        description="Simulate linear dynamical systems across spectral regimes, "
                    "identify them by least squares, and verify the finite-time "
                    "error bounds by Monte Carlo.",
    )
    sub = parser.add_subparsers(dest="command")
    sub.add_parser("simulate", parents=[common],
                   help="simulate a trajectory and write it as CSV").set_defaults(func=_cmd_simulate)
    sub.add_parser("estimate", parents=[common],
                   help="simulate and print the least-squares estimate").set_defaults(func=_cmd_estimate)
    sub.add_parser("bounds", parents=[common],
                   help="print the finite-time constants and sample size").set_defaults(func=_cmd_bounds)
    sub.add_parser("montecarlo", parents=[common],
                   help="run a Monte Carlo campaign").set_defaults(func=_cmd_montecarlo)
    sub.add_parser("sensitivity", parents=[common],
                   help="run a stabilization sensitivity scan").set_defaults(func=_cmd_sensitivity)
    sub.add_parser("check-tails", parents=[common],
                   help="verify a noise model's tail certificate empirically").set_defaults(func=_cmd_check_tails)
    return parser


def _out_dir(args, cfg) -> str:
    out = args.out or cfg.get("outputs", ".")
    os.makedirs(out, exist_ok=True)
    return out


def _seed(args, cfg, default: int = 0) -> int:
    return int(args.seed if args.seed is not None else cfg.get("seed", default))


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _cmd_simulate(args) -> int:
    cfg = harness.load_config_file(args.config)
    spec = harness.system_from_dict(cfg["system"])
    n = int(cfg.get("n", 100))
    traj = simulate(spec, n, _seed(args, cfg))
    path = os.path.join(_out_dir(args, cfg), "trajectory.csv")
    trajectory_to_csv(traj, path, include_noise=bool(cfg.get("include_noise", False)))
    _print_json({"trajectory": path, "n": traj.n,
                 "overflowed_at": traj.overflowed_at})
    return EXIT_OK


def _cmd_estimate(args) -> int:
    cfg = harness.load_config_file(args.config)
    spec = harness.system_from_dict(cfg["system"])
    n = int(cfg.get("n", 100))
    traj = simulate(spec, n, _seed(args, cfg))
    horizon = traj.n if traj.overflowed_at is not None else n
    report = ols(traj, horizon, ridge=float(cfg.get("ridge", 0.0)), truth=spec.A0)
    _print_json(report.to_json_dict())
    return EXIT_OK


def _cmd_bounds(args) -> int:
    cfg = harness.load_config_file(args.config)
    spec = harness.system_from_dict(cfg["system"])
    mc = bounds_mod.MonteCarloOpts(samples=int(cfg.get("mc_samples", 100_000)),
                                   seed=_seed(args, cfg))
    psi_opts = bounds_mod.PsiSearchOpts(samples=int(cfg.get("psi_samples", 10_000)),
                                        seed=_seed(args, cfg))
    report = bounds_mod.compute_bound_report(
        spec, float(cfg["epsilon"]), float(cfg["delta"]), mc, psi_opts,
    )
    _print_json(report.to_json_dict())
    return EXIT_OK


def _cmd_montecarlo(args) -> int:
    cfg = harness.load_config_file(args.config)
    config = harness.experiment_config_from_dict(cfg, out_override=args.out,
                                                 seed_override=args.seed)
    report = harness.run_montecarlo(config, threads=args.threads)
    with open(report.summary_path) as fh:
        print(fh.read(), end="")
    return EXIT_OK


def _cmd_sensitivity(args) -> int:
    cfg = harness.load_config_file(args.config)
    try:
        ctrl = cfg["control"]
        cs = ControlSystem(Ax=np.asarray(ctrl["ax"], dtype=float),
                           Au=np.asarray(ctrl["au"], dtype=float))
        mode = cfg.get("mode", "global_awgn")
        magnitudes = [float(m) for m in cfg["magnitudes"]]
        trials = int(cfg.get("trials", 20))
    except KeyError as exc:
        raise InputError(f"missing config key: {exc}") from exc
    scan = sensitivity_scan(cs, mode, magnitudes, trials, seed=_seed(args, cfg))
    files = harness.sensitivity_report(scan, _out_dir(args, cfg))
    _print_json(files)
    return EXIT_OK


def _cmd_check_tails(args) -> int:
    cfg = harness.load_config_file(args.config)
    p = int(cfg.get("p", 1))
    model = harness.noise_from_dict(cfg.get("noise", {}), p)
    samples = model.sample(np.random.Generator(np.random.Philox(_seed(args, cfg))),
                           int(cfg.get("samples", 100_000)))
    grid = [float(y) for y in cfg.get("grid", [0.5, 1.0, 2.0, 4.0])]
    report = verify_tail(samples, model.tail, grid)
    _print_json(report.to_json_dict())
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cli_dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except InputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SysIdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    raise SystemExit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
