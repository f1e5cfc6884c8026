"""Command line entry point: convergence tables and verification suites.

Exit codes: 0 success, 2 solver failure, 3 verification failure, 4 bad configuration.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .mesh import MeshError, write_mesh
from .problems import PROBLEMS
from .study import ConfigError, RunConfig, base_mesh, run_checks, run_convergence

EXIT_OK = 0
EXIT_SOLVER = 2
EXIT_CHECK = 3
EXIT_CONFIG = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="divdiv", description="Mixed H(div div) finite elements (k=3) for the clamped plate.")
    p.add_argument("--example", default="square-uniform", choices=sorted(PROBLEMS))
    p.add_argument("--levels", type=int, default=4, help="number of mesh levels (at most 6)")
    p.add_argument("--solver", default="direct", choices=["direct", "krylov"])
    p.add_argument("--tol", type=float, default=1e-10, help="relative KKT residual tolerance")
    p.add_argument("--perturb", type=float, default=None, help="vertex perturbation factor of the level-1 mesh")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="report path; stdout when omitted")
    p.add_argument("--format", default="csv", choices=["csv", "md", "json"])
    p.add_argument("--check", default=None, choices=["unisolvence", "complex", "infsup", "all"])
    p.add_argument("--export-mesh", default=None, help="write the level-1 mesh to this path")
    p.add_argument("--quad-degree", type=int, default=14, help="quadrature degree for loads and errors")
    p.add_argument("--quiet", action="store_true", help="suppress per-level progress on stderr")
    return p


def config_from_args(args) -> RunConfig:
    return RunConfig(
        example=args.example,
        levels=args.levels,
        solver=args.solver,
        tol=args.tol,
        perturb=args.perturb,
        seed=args.seed,
        quad_degree=args.quad_degree,
        out=args.out,
        format=args.format,
        check=args.check,
        export_mesh=args.export_mesh,
    ).validate()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        if config.export_mesh:
            write_mesh(base_mesh(config), config.export_mesh)
    except (ConfigError, MeshError, OSError) as exc:
        print(f"divdiv: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if config.check:
        results = run_checks(config)
        _emit("".join(r.line() + "\n" for r in results), config.out)
        return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK

    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    report = run_convergence(config, log)
    _emit(report.render(config.format), config.out)
    if not report.complete:
        print(f"divdiv: solver failure, report incomplete ({report.failure})", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
