# ritzkit/app.py
from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConfigError, NumericalError
from .experiment import (
    LOG_FORMAT,
    audit_coercivity,
    bundled_configs,
    compare_run,
    export_collocation,
    fit_rate_file,
    load_config,
    run_experiment,
    write_reference_grid,
)
from .operators import BURGERS_NU

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ACCEPTANCE = 4


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ritzkit",
        description="PINN / Deep Ritz training on two-layer tanh networks with NTK and coercivity diagnostics.",
    )
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--quiet", action="store_true", help="no progress bars")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config", help="config path or bundled name (" + ", ".join(bundled_configs()) + ")")
    r.add_argument("--out", default=None, help="output directory (default: config output_dir or runs/<name>)")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")

    c = sub.add_parser("compare", help="error table of a run against a reference")
    c.add_argument("run_dir")
    c.add_argument("--ref", required=True, help="cole_hopf | manufactured:<id> | run:<dir>")
    c.add_argument("--slices", type=_floats, default=None, help="first-coordinate slices, e.g. 0.25,0.5,0.75")
    c.add_argument("--points", type=int, default=201)
    c.add_argument("--out", default=None, help="CSV path (default: <run_dir>/compare.csv)")

    a = sub.add_parser("audit-coercivity", help="boundary coercivity and discrete independence sweep")
    a.add_argument("config")
    a.add_argument("--out", default=None)
    a.add_argument("--seed", type=int, default=None)

    f = sub.add_parser("fit-rate", help="fit the convergence regime of a trace CSV")
    f.add_argument("trace")
    f.add_argument("--loss-floor", type=float, default=None)
    f.add_argument("--out", default=None, help="also write the fit as JSON")

    s = sub.add_parser("selftest", help="run the oracle suites")
    s.add_argument("--only", action="append", default=None, help="suite name (repeatable)")
    s.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("export-collocation", help="write the sampled collocation points of a config")
    e.add_argument("config")
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int, default=None)

    g = sub.add_parser("reference-grid", help="Cole-Hopf Burgers field on a (t, x) grid")
    g.add_argument("--out", required=True)
    g.add_argument("--ts", type=_floats, default=[0.25, 0.5, 0.75])
    g.add_argument("--nx", type=int, default=201)
    g.add_argument("--nu", type=float, default=BURGERS_NU)
    return p


def _configure_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level), format=LOG_FORMAT, stream=sys.stderr)


def _print_json(payload) -> None:
    print(json.dumps(payload, indent=2))


def _dispatch(args: argparse.Namespace) -> int:
    progress = not args.quiet and sys.stderr.isatty()

    if args.command == "run":
        cfg = load_config(args.config, seed=args.seed)
        outcome = run_experiment(cfg, out_dir=args.out, progress=progress)
        _print_json({"out_dir": outcome.out_dir, "status": outcome.status})
        return EXIT_OK if outcome.ok else EXIT_NUMERIC

    if args.command == "compare":
        rows = compare_run(args.run_dir, args.ref, slices=args.slices, points=args.points, out_path=args.out)
        for s, n, l2, linf, ref in rows:
            print(f"{s!r},{n},{l2!r},{linf!r},{ref!r}")
        return EXIT_OK

    if args.command == "audit-coercivity":
        cfg = load_config(args.config, seed=args.seed)
        report = audit_coercivity(cfg, out_dir=args.out)
        _print_json({"passed": report.passed, "coercive": report.payload["coercive"]})
        return EXIT_OK if report.passed else EXIT_ACCEPTANCE

    if args.command == "fit-rate":
        fit = fit_rate_file(args.trace, loss_floor=args.loss_floor, out_path=args.out)
        _print_json(fit.to_dict())
        return EXIT_OK

    if args.command == "selftest":
        from .selftest import run_selftest

        report = run_selftest(only=args.only, seed=args.seed)
        for r in report.results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail} ({r.seconds:.1f}s)")
        return EXIT_OK if report.passed else EXIT_ACCEPTANCE

    if args.command == "export-collocation":
        cfg = load_config(args.config, seed=args.seed)
        col = export_collocation(cfg, args.out)
        logger.info("wrote %d interior / %d boundary points to %s", col.n1, col.n2, args.out)
        return EXIT_OK

    if args.command == "reference-grid":
        xs = np.linspace(-1.0, 1.0, int(args.nx))
        n = write_reference_grid(args.out, args.ts, xs, nu=args.nu)
        logger.info("wrote %d reference values to %s", n, args.out)
        return EXIT_OK

    raise ConfigError(f"unknown command '{args.command}'")


def run_app(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level)
    try:
        return _dispatch(args)
    except NumericalError as e:
        logger.error("%s", e)
        return EXIT_NUMERIC
    except (ConfigError, FileNotFoundError) as e:
        logger.error("%s", e)
        return EXIT_CONFIG
    except ValueError as e:
        logger.error("invalid input: %s", e)
        return EXIT_CONFIG
