"""Membrane estimator against dof count for uniform and adaptive refinement."""
import argparse
from pathlib import Path

import numpy as np

from obstakl import applications as ap
from obstakl.adaptivity import AdaptOptions, adapt_loop
from obstakl.export import export_convergence


def slope(res):
    N = np.array([r.record.N for r in res[-4:]], float)
    eta = np.array([r.record.eta_total for r in res[-4:]])
    return np.polyfit(np.log(N), np.log(eta), 1)[0]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--adaptive-levels", type=int, default=8)
    p.add_argument("--uniform-levels", type=int, default=5)
    p.add_argument("--out", type=Path, default=Path("results"))
    args = p.parse_args()

    problem = ap.build_membrane()
    ad = adapt_loop(problem, ap.membrane_mesh(3), args.adaptive_levels)
    un = adapt_loop(problem, ap.membrane_mesh(1), args.uniform_levels,
                    options=AdaptOptions(uniform=True))
    args.out.mkdir(parents=True, exist_ok=True)
    for tag, res in (("adaptive", ad), ("uniform", un)):
        export_convergence([r.record for r in res], args.out / f"membrane_{tag}_convergence.csv")
        print(f"{tag:>8}: slope {slope(res):.3f}")
        for r in res:
            print(f"          N={r.record.N:7d} eta={r.record.eta_total:.4e}")
    # nearest-N comparison
    for r in un:
        near = min(ad, key=lambda a: abs(np.log(a.record.N / r.record.N)))
        print(f"N~{r.record.N:7d}: uniform {r.record.eta_total:.3e}  "
              f"adaptive {near.record.eta_total:.3e} (N={near.record.N})")


if __name__ == "__main__":
    main()
