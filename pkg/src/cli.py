"""
Command Line Interface
verify / transform / symmetry / invariant / hierarchy / hereditary / catalog
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import catalog, commands
from .config import configure_logging
from .errors import exit_code_for

logger = logging.getLogger(__name__)


def _entry(args) -> catalog.CatalogEntry:
    if args.model_file:
        return catalog.load_model_file(args.model_file)
    return catalog.get(args.model)


def _add_common(p: argparse.ArgumentParser, model: bool = True):
    if model:
        group = p.add_mutually_exclusive_group()
        group.add_argument("--model", default="toy", help="catalog model name (default: toy)")
        group.add_argument("--model-file", type=Path, help="JSON model definition")
    p.add_argument("--json", metavar="PATH", help="write the JSON report to PATH ('-' for stdout)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_samples(p: argparse.ArgumentParser):
    p.add_argument("--points", help='e.g. "t=-0.5,x=1;t=-0.2,x=2"')
    p.add_argument("--grid", help='e.g. "t:-0.2:-0.05:4,x:2:3:4"')


def build_parser() -> argparse.ArgumentParser:
    argp = argparse.ArgumentParser(prog="pbs", description="Primary branch solutions of first-order scalar PDEs")
    sub = argp.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="PDE residual of a closed-form solution")
    _add_common(p)
    _add_samples(p)
    p.add_argument("--solution", required=True)
    p.add_argument("--tolerance", type=float, default=1e-9)

    p = sub.add_parser("transform", help="generate a new solution from a seed")
    _add_common(p)
    p.add_argument("--seed", required=True)
    p.add_argument("--g", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--out", type=Path, help="CSV output path")
    p.add_argument("--expect", help="closed form the generated u must match")
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--tolerance", type=float, default=1e-6)

    p = sub.add_parser("symmetry", help="linearized residual of a candidate symmetry")
    _add_common(p)
    _add_samples(p)
    p.add_argument("--sigma", required=True)
    p.add_argument("--background")
    p.add_argument("--tolerance", type=float, default=1e-9)

    p = sub.add_parser("invariant", help="invariant residual, or A/B/G functional relations")
    _add_common(p)
    _add_samples(p)
    p.add_argument("--phi")
    p.add_argument("--background")
    p.add_argument("--kind", choices=["A", "B", "G"])
    p.add_argument("--constant", type=float, default=1.0)
    p.add_argument("--jets", help='e.g. "u=1.2,u_x=0.7;u=1.5,u_x=1.1"')
    p.add_argument("--tolerance", type=float, default=1e-9)

    p = sub.add_parser("hierarchy", help="symmetry hierarchy K_0..K_m")
    _add_common(p)
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--G")
    p.add_argument("--background")
    p.add_argument("--points")
    p.add_argument("--tolerance", type=float, default=1e-8)

    p = sub.add_parser("hereditary", help="hereditary identity over random polynomial triples")
    _add_common(p)
    p.add_argument("--G")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--rng-seed", type=int)
    p.add_argument("--tolerance", type=float, default=1e-9)

    p = sub.add_parser("catalog", help="list models or show one")
    _add_common(p, model=False)
    p.add_argument("name", nargs="?")
    return argp


def _run(args) -> commands.RunReport:
    if args.command == "catalog":
        return commands.run_catalog(args.name)
    entry = _entry(args)
    if args.command == "verify":
        return commands.run_verify(entry, args.solution, args.points, args.grid, args.tolerance)
    if args.command == "transform":
        report, _ = commands.run_transform(entry, args.seed, args.g, args.grid, out=args.out, expect=args.expect,
                                           epsilon=args.epsilon, tolerance=args.tolerance)
        return report
    if args.command == "symmetry":
        return commands.run_symmetry(entry, args.sigma, args.background, args.points, args.grid, args.tolerance)
    if args.command == "invariant":
        return commands.run_invariant(entry, args.phi, args.background, args.points, args.grid, kind=args.kind,
                                      constant=args.constant, jets=args.jets, tolerance=args.tolerance)
    if args.command == "hierarchy":
        return commands.run_hierarchy(entry, args.levels, args.G, args.background, args.points, args.tolerance)
    return commands.run_hereditary(entry, args.G, args.trials, args.rng_seed, args.tolerance)


def _main(args) -> int:
    report = _run(args)
    if args.json == "-":
        print(report.to_json())
    else:
        print(report.render())
        if args.json:
            Path(args.json).write_text(report.to_json() + "\n", encoding="utf-8")
    return report.exit_status


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging({0: None, 1: "INFO"}.get(args.verbose, "DEBUG"))
    try:
        return _main(args)
    except Exception as e:
        logger.debug("command failed", exc_info=True)
        print(f"Error ({type(e).__name__}): {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
