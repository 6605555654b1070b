"""Command line: ``obstakl <driver> --config FILE [--levels N] [--beta B] [--out DIR] [--uniform]``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import drivers
from .applications import InfeasibleObstacleError
from .config import DRIVERS, ConfigError, parse_config
from .export import export_convergence, export_vtk, extract_midline, vertex_values
from .solver import NonConvergenceError

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 1, 2

logger = logging.getLogger("obstakl")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="obstakl", description="Adaptive mixed FEM obstacle solver")
    ap.add_argument("driver", choices=DRIVERS)
    ap.add_argument("--config", type=Path, help="INI-style run configuration")
    ap.add_argument("--levels", type=int)
    ap.add_argument("--beta", type=float)
    ap.add_argument("--out", type=Path)
    ap.add_argument("--uniform", action="store_true", help="refine every element")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(args):
    text = args.config.read_text() if args.config else ""
    cfg = parse_config(text, driver=args.driver)
    if args.levels is not None:
        cfg.levels = args.levels
    if args.beta is not None:
        cfg.beta = args.beta
    if args.out is not None:
        cfg.out = str(args.out)
    if args.uniform:
        cfg.uniform = True
    return cfg.validate()


def write_outputs(cfg, setup, results, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    tag = f"{cfg.driver}_{'uniform' if cfg.uniform else 'adaptive'}"
    written = []
    if "csv" in cfg.formats:
        written.append(export_convergence([r.record for r in results],
                                          out / f"{tag}_convergence.csv", timing=cfg.timing))
        if cfg.driver == "bearing":
            written.append(out / f"{tag}_midline.csv")
            extract_midline(results[-1].solution, setup.problem,
                            samples=cfg.params.samples, path=written[-1])
    if "vtk" in cfg.formats:
        shift = setup.problem.meta.get("shift", 0.0)
        for r in results:
            u = vertex_values(r.solution.V, r.solution.u) + shift
            cells = {"lambda": r.solution.lam, "eta": r.indicators.total ** 0.5}
            path = out / f"{tag}_level{r.record.level}.vtk"
            export_vtk(r.mesh, path, {"u": u}, cells, title=f"{tag} level {r.record.level}")
            written.append(path)
    return written


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    threads = os.environ.get("OBSTAKL_THREADS")
    try:
        limit = threadpool_limits(int(threads)) if threads else nullcontext()
    except ValueError:
        print(f"config error: OBSTAKL_THREADS must be an integer, got {threads!r}",
              file=sys.stderr)
        return EXIT_CONFIG
    with limit:
        try:
            setup, results = drivers.run(cfg)
        except NonConvergenceError as exc:
            print(f"solver did not converge: {exc}", file=sys.stderr)
            return EXIT_NONCONVERGENCE
        except InfeasibleObstacleError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    for r in results:
        rec = r.record
        print(f"level {rec.level}: N={rec.N} eta={rec.eta_total:.6e} iters={rec.pdas_iters}")
    for path in write_outputs(cfg, setup, results, Path(cfg.out)):
        print(f"wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
