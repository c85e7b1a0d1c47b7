"""
Command-line entry point: portrait, build, certify, orbit and scan.

Exit codes: 0 success, 1 I/O, 2 precondition, 3 construction failure, 4 certification failure,
5 orbit not found.
"""
import argparse
import sys

from src.core.config import SCAN_WORKERS
from src.core.exceptions import ReversibleChaosError
from src.core.logger import logger, set_level
from src.core.run_config import RunConfig
from src.services.pipeline import run_build, run_certify, run_orbit, run_portrait
from src.services.scan import parse_values, run_scan, write_scan_report

# Flags that map one-to-one onto RunConfig fields
RUN_FLAGS = ("family", "lambda1", "lambda2", "tau1", "tau2", "m", "out", "samples", "grid", "paths",
             "seed", "slack", "alpha", "beta", "word", "lam", "window", "geometry", "rel_tol", "abs_tol")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="key = value configuration file")
    parser.add_argument("--family", type=str, default=None, help="Saddle, Cusp, ... (default: Saddle)")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--rel-tol", dest="rel_tol", type=float, default=None)
    parser.add_argument("--abs-tol", dest="abs_tol", type=float, default=None)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def _instance(parser: argparse.ArgumentParser, lists: bool = False) -> None:
    kind = str if lists else float
    parser.add_argument("--lambda1", type=kind, default=None)
    parser.add_argument("--lambda2", type=kind, default=None)
    parser.add_argument("--m", type=int, default=None, help="annulus crossings requested (default: 2)")
    parser.add_argument("--samples", type=int, default=None, help="boundary samples per twist check")
    parser.add_argument("--grid", type=int, default=None, help="crossing-set grid resolution")
    parser.add_argument("--paths", type=int, default=None, help="random paths per stretching check")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--slack", type=float, default=None, help="relative strip-time slack")


def _certifiable(parser: argparse.ArgumentParser) -> None:
    _instance(parser)
    parser.add_argument("--tau1", type=float, default=None, help="first pulse duration override")
    parser.add_argument("--tau2", type=float, default=None, help="second pulse duration override")
    parser.add_argument("--alpha", type=float, default=None, help="strip boundary tip override")
    parser.add_argument("--beta", type=float, default=None, help="second strip boundary tip override")
    parser.add_argument("--geometry", type=str, default=None, help="reuse alpha, beta and times of a geometry JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reversible-chaos",
                                     description="Chaos certificates for pulse-forced reversible planar systems")
    commands = parser.add_subparsers(dest="command", required=True)

    portrait = commands.add_parser("portrait", help="SVG phase portrait of one normal form")
    _common(portrait)
    portrait.add_argument("--lambda", dest="lam", type=float, default=None)
    portrait.add_argument("--window", type=str, default=None, help="xmin,xmax,ymin,ymax")

    for name, text in (("build", "build the linked annulus and strip"),
                       ("certify", "build and certify chaos on m symbols")):
        sub = commands.add_parser(name, help=text)
        _common(sub)
        _certifiable(sub)

    orbit = commands.add_parser("orbit", help="periodic orbit realizing a symbol word")
    _common(orbit)
    _certifiable(orbit)
    orbit.add_argument("--word", type=str, required=True, help="symbols, e.g. 01 or 0,1,1")

    scan = commands.add_parser("scan", help="certify every point of a parameter grid")
    _common(scan)
    _instance(scan, lists=True)
    scan.add_argument("--workers", type=int, default=SCAN_WORKERS)
    return parser


def run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then the flags."""
    run = RunConfig.from_file(args.config) if args.config else RunConfig()
    flags = {name: getattr(args, name) for name in RUN_FLAGS if hasattr(args, name)}
    if args.command == "scan":
        flags.pop("lambda1", None)
        flags.pop("lambda2", None)
    return run.merged(flags)


def _scan(args: argparse.Namespace, run: RunConfig) -> None:
    lambda1s = parse_values(args.lambda1 or str(run.lambda1))
    lambda2s = parse_values(args.lambda2 or str(run.lambda2))
    rows = run_scan(run, lambda1s, lambda2s, workers=args.workers)
    path = write_scan_report(rows, run.output_dir / f"scan_{run.family.value.lower()}.csv")
    logger.info(f"Scan report: {path}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        set_level("DEBUG")
    try:
        run = run_config(args)
        if args.command == "portrait":
            run_portrait(run)
        elif args.command == "build":
            run_build(run)
        elif args.command == "certify":
            run_certify(run)
        elif args.command == "orbit":
            run_orbit(run)
        elif args.command == "scan":
            _scan(args, run)
    except ReversibleChaosError as e:
        print(f"error: {e.stage}: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        print(f"error: precondition: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
