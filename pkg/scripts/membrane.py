"""Adaptive membrane run: estimator decay and warm vs cold PDAS iterations."""
import argparse
from pathlib import Path

import numpy as np

from obstakl import applications as ap
from obstakl.adaptivity import adapt_loop
from obstakl.export import export_convergence
from obstakl.fem import DofBasis
from obstakl.solver import pdas_solve


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--levels", type=int, default=8)
    p.add_argument("--start", type=int, default=3, help="initial symmetric refinement level")
    p.add_argument("--out", type=Path, default=Path("results"))
    args = p.parse_args()

    problem = ap.build_membrane()
    res = adapt_loop(problem, ap.membrane_mesh(args.start), args.levels)
    print(f"{'lvl':>3} {'N':>7} {'eta':>11} {'warm':>5} {'cold':>5} {'active':>6}")
    for r in res:
        V, Q = DofBasis.p2b(r.mesh), DofBasis.p0(r.mesh)
        cold = pdas_solve(problem, V, Q)[1].iterations
        rec = r.record
        print(f"{rec.level:3d} {rec.N:7d} {rec.eta_total:11.4e} {rec.pdas_iters:5d} {cold:5d} "
              f"{int((r.solution.lam > 0).sum()):6d}")
    N = np.array([r.record.N for r in res[-4:]], float)
    eta = np.array([r.record.eta_total for r in res[-4:]])
    print(f"slope over last 4 levels: {np.polyfit(np.log(N), np.log(eta), 1)[0]:.3f}")
    args.out.mkdir(parents=True, exist_ok=True)
    export_convergence([r.record for r in res], args.out / "membrane_adaptive_convergence.csv")


if __name__ == "__main__":
    main()
