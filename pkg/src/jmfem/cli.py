"""Command line interface: ``jmfem --benchmark lshape --mode adaptive ...``.

Settings come from an optional key-value config file (``--config``, INI
syntax with a ``[study]`` section) and are overridden by explicit flags.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .benchmarks import BENCHMARKS
from .study import (DEFAULT_BUDGET, DEFAULT_MAX_ITERATIONS, ESTIMATORS, MODES, StudyConfig,
                    StudyError, emit_table, output_paths, parse_config_text, run_study,
                    write_table)

log = logging.getLogger("jmfem")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="jmfem",
        description="Johnson-Mercier mixed FEM convergence studies for plane elasticity.")
    p.add_argument("--config", help="key-value config file with a [study] section")
    p.add_argument("--benchmark", choices=BENCHMARKS)
    p.add_argument("--nu", type=float, nargs="+", help="one or more Poisson ratios")
    p.add_argument("--E", type=float, help="Young's modulus")
    p.add_argument("--levels", type=int, help="number of uniform meshes")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--estimator", choices=ESTIMATORS, help="estimator driving the marking")
    p.add_argument("--theta", type=float, help="marking fraction in (0, 1]")
    p.add_argument("--tol", type=float, help="relative residual tolerance of the solver")
    p.add_argument("--out", help="CSV output path (one file per nu); stdout if omitted")
    p.add_argument("--mesh-in", dest="mesh_in", help="initial mesh file replacing the built-in one")
    p.add_argument("--budget", type=int,
                   help=f"adaptive stop once N exceeds this (default {DEFAULT_BUDGET})")
    p.add_argument("--max-iterations", dest="max_iterations", type=int,
                   help=f"adaptive iteration limit (default {DEFAULT_MAX_ITERATIONS})")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def config_from_args(args: argparse.Namespace) -> StudyConfig:
    """Merge config file values and explicit flags into a validated config."""
    values = {}
    if args.config:
        with open(args.config) as fh:
            values.update(parse_config_text(fh.read()))
    for key in StudyConfig.__dataclass_fields__:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return StudyConfig(**values)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        config = config_from_args(args)
        results = run_study(config)
        if config.out:
            for nu, path in output_paths(config.out, config.nu).items():
                emit_table(results[nu], path, config.mode)
                log.info("wrote %s", path)
        else:
            for nu in config.nu:
                if len(config.nu) > 1:
                    sys.stdout.write(f"# nu = {nu:g}\n")
                write_table(results[nu], sys.stdout, config.mode)
    except (StudyError, ValueError, OSError) as exc:
        print(f"jmfem: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
