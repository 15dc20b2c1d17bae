"""Command-line entry point: ``kifid <subcommand>``.

Exit codes: 0 success, 2 config error, 3 a run ended in the UNRESOLVED
regime, 4 oracle failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .config import ConfigError, ExperimentConfig, load_config, preset
from .experiments import cmd_correlations, cmd_fidelity, cmd_oracle_check, cmd_theory, reproduce
from .state import KickedIsingParams, configure_threads

EXIT_CONFIG = 2
EXIT_UNRESOLVED = 3
EXIT_ORACLE = 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON config or run manifest")
    p.add_argument("--preset", choices=["integrable", "intermediate", "ergodic"])
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--seed", type=int)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", dest="mode", action="store_const", const="exact_basis_sum")
    mode.add_argument("--stochastic", dest="mode", action="store_const", const="stochastic")
    p.add_argument("--samples", type=int)
    p.add_argument("--sizes", type=int, nargs="+", metavar="L")
    p.add_argument("--delta-primes", type=float, nargs="+", metavar="D")
    p.add_argument("--t-max", type=int)
    p.add_argument("--allow-large", action="store_true", help="permit L > 16")
    p.add_argument("--no-plot", action="store_true")


def _params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--jz", type=float, default=1.0)
    p.add_argument("--hx", type=float, default=1.4)
    p.add_argument("--hz", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kifid", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None, help="worker threads (0 = auto)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("correlations", help="correlation function C_A(t)"))
    _common(sub.add_parser("fidelity", help="fidelity |F(t)| with decay fits"))

    th = sub.add_parser("theory", help="closed-form predictions as JSON")
    _params(th)
    th.add_argument("--L", type=int, default=24, dest="n_sites")
    th.add_argument("--delta-prime", type=float, default=0.02)
    th.add_argument("--s-a", type=float, help="measured S_A (whole chain)")
    th.add_argument("--c-a", type=float, help="plateau constant c_A")

    oc = sub.add_parser("oracle-check", help="compare gate dynamics with dense matrices")
    _params(oc)
    oc.add_argument("--L", type=int, default=6, dest="n_sites")
    oc.add_argument("--delta", type=float, default=0.05)
    oc.add_argument("--t", type=int, default=50)
    oc.add_argument("--oracle-order", choices=["kick-then-zz", "zz-then-kick"], default="kick-then-zz")

    rp = sub.add_parser("reproduce", help="run all three presets for a figure")
    rp.add_argument("figure", choices=["fig1", "fig2"])
    _common(rp)
    return parser


def _resolve_config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = preset(args.preset)
    else:
        cfg = ExperimentConfig()
    overrides = {
        "out_dir": args.out,
        "seed": args.seed,
        "mode": args.mode,
        "n_samples": args.samples,
        "sizes": args.sizes,
        "delta_primes": args.delta_primes,
        "t_max": args.t_max,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.allow_large:
        overrides["allow_large"] = True
    return replace(cfg, **overrides).validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    configure_threads(args.threads)

    if args.command == "theory":
        params = KickedIsingParams(args.jz, args.hx, args.hz)
        print(json.dumps(cmd_theory(params, args.n_sites, args.delta_prime, args.s_a, args.c_a), indent=2))
        return 0

    if args.command == "oracle-check":
        params = KickedIsingParams(args.jz, args.hx, args.hz)
        try:
            report = cmd_oracle_check(args.n_sites, params, args.delta, args.t, oracle_order=args.oracle_order)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(json.dumps(report.as_dict(), indent=2))
        return 0 if report.passed else EXIT_ORACLE

    try:
        cfg = _resolve_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_CONFIG

    plot = not args.no_plot
    if args.command == "reproduce":
        results = reproduce(args.figure, cfg, args.out or cfg.out_dir, plot=plot)
    elif args.command == "correlations":
        results = [cmd_correlations(cfg, plot=plot)]
    else:
        results = [cmd_fidelity(cfg, plot=plot)]
    for r in results:
        for f in r.files:
            print(f)
    if any(r.unresolved for r in results):
        print("warning: UNRESOLVED regime classification", file=sys.stderr)
        return EXIT_UNRESOLVED
    return 0


if __name__ == "__main__":
    sys.exit(main())
