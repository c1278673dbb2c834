"""Command-line entry point.

Subcommands:

* ``run``    -- execute one experiment/algorithm into a run directory
* ``sweep``  -- PSNR-vs-weight curves from repeated single-step solves
* ``report`` -- render matplotlib figures for an existing run directory

Exit codes: 0 on success, 1 on configuration errors, 2 on solver failures
(diagnostics go to stderr).  A flat key=value config file can seed any run;
explicit flags override it, and the effective config is echoed into the run
directory so that reruns reproduce every CSV bitwise.
"""

from __future__ import annotations

import argparse
import sys

from .errors import BregdecompError, ConfigError
from .runner import (ALGOS, EXPERIMENTS, RunConfig, parse_config_text,
                     parse_grid_spec, run_experiment, run_sweep)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_run_flags(p):
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--algo", choices=ALGOS)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--alpha1", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--alpha2", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--omega", type=str, help="comma-separated 2-vector, e.g. 0.25,0.5")
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-std", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--max-outer", type=int)
    p.add_argument("--inner-tol", type=float)
    p.add_argument("--max-inner", type=int)
    p.add_argument("--moreau-mu", type=float)
    p.add_argument("--size", type=int)
    p.add_argument("--blur-std", type=float)
    p.add_argument("--out", type=str)
    p.add_argument("--swap-roles", action="store_true", default=None)
    p.add_argument("--no-halt", action="store_true", default=None,
                   help="record the full trajectory instead of stopping at "
                        "the correlation minimum")
    p.add_argument("--snapshots", action="store_true", default=None,
                   help="write per-step component FIELD files under steps/")
    p.add_argument("--figures", action="store_true", default=None)
    p.add_argument("--config", type=str, help="flat key=value config file")


_BOOL_KEYS = ("swap-roles", "figures", "halt-on-stop")


def _coerce(key, val):
    key = key.replace("-", "_")
    if key == "omega":
        parts = [float(x) for x in val.split(",")]
        if len(parts) != 2:
            raise ConfigError(f"omega needs two components, got {val!r}")
        return key, tuple(parts)
    fields = {
        "experiment": str, "algo": str, "out": str,
        "seed": int, "size": int, "max_outer": int, "max_inner": int,
        "max_inner_bregman": int,
        "swap_roles": None, "figures": None, "halt_on_stop": None,
        "snapshots": None,
    }
    typ = fields.get(key, float)
    if typ is None:
        return key, val.lower() in ("1", "true", "yes")
    return key, typ(val)


def _config_from_args(args):
    kwargs = {}
    config_text = None
    if args.config:
        try:
            with open(args.config) as fh:
                config_text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}")
        for key, val in parse_config_text(config_text).items():
            if key in ("sweep-mode", "sweep-count", "sweep-alphas"):
                continue
            k, v = _coerce(key, val)
            kwargs[k] = v
    for name in ("experiment", "algo", "alpha", "beta", "alpha1", "beta1",
                 "alpha2", "beta2", "seed", "noise_std", "tau", "max_outer",
                 "inner_tol", "max_inner", "moreau_mu", "size", "blur_std",
                 "out", "swap_roles", "figures", "snapshots"):
        val = getattr(args, name, None)
        if val is not None:
            kwargs[name] = val
    if getattr(args, "omega", None) is not None:
        _, kwargs["omega"] = _coerce("omega", args.omega)
    if getattr(args, "no_halt", None):
        kwargs["halt_on_stop"] = False
    try:
        return RunConfig(**kwargs), config_text
    except TypeError as exc:
        raise ConfigError(str(exc))


def build_parser():
    parser = _Parser(prog="bregdecomp",
                     description="Two-component signal/image decomposition "
                                 "via nested Bregman iterations")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment")
    _add_run_flags(run_p)

    sweep_p = sub.add_parser("sweep", help="single-step weight sweep")
    _add_run_flags(sweep_p)
    sweep_p.add_argument("--alphas", type=str, required=True,
                         help="grid spec lo:hi:log|lin:count")
    sweep_p.add_argument("--mode", type=str, default="morozov-single-step",
                         choices=("morozov-single-step",
                                  "tikhonov-single-step"))

    rep_p = sub.add_parser("report", help="render figures for a run directory")
    rep_p.add_argument("run_dir", type=str)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            cfg, text = _config_from_args(args)
            result = run_experiment(cfg, config_text=text)
            for key, val in result.summary.items():
                print(f"{key}={val}")
            return 0
        if args.command == "sweep":
            cfg, _ = _config_from_args(args)
            alphas = parse_grid_spec(args.alphas)
            run_sweep(cfg, alphas, mode=args.mode)
            print(f"sweep of {len(alphas)} values written to {cfg.out}/sweep.csv")
            return 0
        if args.command == "report":
            from .report import render_run_figures
            paths = render_run_figures(args.run_dir)
            for p in paths:
                print(p)
            return 0
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except BregdecompError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
