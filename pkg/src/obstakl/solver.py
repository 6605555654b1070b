"""Primal-dual active set iteration for the discrete obstacle problem."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .applications import ObstacleProblem, enforce_constraints
from .fem import DofBasis, MixedSystem, assemble_mixed, condense, solve_linear
from .mesh import locate_points

logger = logging.getLogger(__name__)


@dataclass
class MixedSolution:
    u: np.ndarray
    lam: np.ndarray
    V: DofBasis | None = None
    Q: DofBasis | None = None
    info: dict = field(default_factory=dict)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u, self.lam])


@dataclass
class PdasReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    active_counts: list = field(default_factory=list)
    converged: bool = False
    cycling: bool = False


class NonConvergenceError(RuntimeError):
    def __init__(self, message, report: PdasReport):
        super().__init__(message)
        self.report = report


def active_set(system: MixedSystem, u, lam) -> np.ndarray:
    """Boolean mask of elements with λ - π(u - g) > 0.

    Ties go to the inactive side.
    """
    U = system.project_p0(u)
    G = system.G / system.areas
    return ~(U - G >= lam)


def pdas_solve(problem: ObstacleProblem, V: DofBasis, Q: DofBasis,
               initial: MixedSolution | None = None, tol: float = 1e-10,
               max_iter: int = 100, system: MixedSystem | None = None):
    """Solve the mixed obstacle problem; returns (MixedSolution, PdasReport)."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    system = system or assemble_mixed(problem, V, Q)
    full = system.linear_system()
    nu = V.n
    bdofs, bvals = enforce_constraints(problem, V)

    if initial is None:
        x = np.zeros(nu + Q.n)
    else:
        x = np.concatenate([initial.u, initial.lam])
    report = PdasReport()
    seen = {}
    for it in range(1, max_iter + 1):
        active = active_set(system, x[:nu], x[nu:])
        key = np.packbits(active).tobytes()
        inactive = np.nonzero(~active)[0]
        fixed = np.concatenate([bdofs, nu + inactive])
        values = np.concatenate([bvals, np.zeros(len(inactive))])
        cond = condense(full, fixed, values)
        x_new = cond.expand(solve_linear(cond.system))
        nrm = np.linalg.norm(x_new)
        diff = np.linalg.norm(x_new - x)
        res = diff / nrm if nrm > 0 else diff
        report.iterations = it
        report.residual_history.append(float(res))
        report.active_counts.append(int(active.sum()))
        x = x_new
        if res < tol:
            report.converged = True
            break
        if key in seen and seen[key] != it - 1:
            report.cycling = True
            raise NonConvergenceError(
                f"active set cycling detected at iteration {it} (first seen at {seen[key]})",
                report)
        seen[key] = it
    else:
        raise NonConvergenceError(f"PDAS did not converge in {max_iter} iterations", report)
    return MixedSolution(x[:nu], x[nu:], V, Q), report


def pgs_oracle(problem: ObstacleProblem, V: DofBasis, Q: DofBasis,
               sweeps_tol: float = 1e-14, max_sweeps: int = 1_000_000,
               system: MixedSystem | None = None) -> MixedSolution:
    """Projected Gauss-Seidel on the dual of the bound-constrained QP.

    Minimises ½uᵀAu - Fᵀu subject to ∫_K u >= ∫_K g by eliminating u,
    u = A⁻¹(F + Bᵀλ), and relaxing the nonnegative multipliers one by one.
    Dense; intended only for small verification problems.
    """
    system = system or assemble_mixed(problem, V, Q)
    nu = V.n
    bdofs, bvals = enforce_constraints(problem, V)
    free = np.setdiff1d(np.arange(nu), bdofs)
    A = system.A.toarray()
    B = system.B.toarray()
    u_b = np.zeros(nu)
    u_b[bdofs] = bvals
    Aff = A[np.ix_(free, free)]
    F = system.F[free] - A[np.ix_(free, bdofs)] @ bvals
    Bf = B[:, free]
    r_g = system.G - B[:, bdofs] @ bvals
    chol = sla.cho_factor(Aff)
    u0 = sla.cho_solve(chol, F)
    W = sla.cho_solve(chol, Bf.T)
    S = Bf @ W
    q = Bf @ u0 - r_g        # constraint slack of the unconstrained solution
    lam = np.zeros(Q.n)
    diag = np.diag(S).copy()
    scale = max(np.max(np.abs(q)) / np.max(diag), 1e-300)
    for sweep in range(max_sweeps):
        biggest = 0.0
        for k in range(Q.n):
            # slack of constraint k: (S λ + q)_k >= 0, λ_k >= 0, complementary
            s = S[k] @ lam + q[k]
            new = max(0.0, lam[k] - s / diag[k])
            biggest = max(biggest, abs(new - lam[k]))
            lam[k] = new
        if biggest <= sweeps_tol * scale:
            break
    else:
        raise RuntimeError("projected Gauss-Seidel oracle did not converge")
    u = u_b.copy()
    u[free] = u0 + W @ lam
    return MixedSolution(u, lam, V, Q)


def warm_start(prev: MixedSolution, V: DofBasis, Q: DofBasis, parent=None) -> MixedSolution:
    """Transfer a solution to a new mesh by point evaluation.

    ``parent`` maps new elements to previous ones (nested refinement) and is
    used as the search hint; points outside the previous mesh are evaluated
    in the nearest element.
    """
    from .fem import REF_DOF_POINTS, geometry_at

    old_V = prev.V
    new_mesh = V.mesh
    nt = new_mesh.ntriangles
    x, _ = geometry_at(new_mesh, REF_DOF_POINTS)          # (nt, 7, 2)
    hint = None if parent is None else np.repeat(np.asarray(parent), 7)
    loc = locate_points(old_V.mesh, x.reshape(-1, 2), hint=hint)
    vals = old_V.evaluate(prev.u, loc.elements, loc.ref).reshape(nt, 7)
    u = V.from_point_values(vals)
    cent_el = loc.elements.reshape(nt, 7)[:, 6]
    lam = np.maximum(prev.lam[cent_el], 0.0)
    if loc.outside:
        logger.info("warm start: %d points outside previous mesh", loc.outside)
    return MixedSolution(u, lam, V, Q, info={"outside": loc.outside})


def complementarity(system: MixedSystem, sol: MixedSolution) -> np.ndarray:
    """Per element min(λ_K, π(u - g)_K)."""
    gap = system.project_p0(sol.u) - system.G / system.areas
    return np.minimum(sol.lam, gap)


def fixed_point_residual(system: MixedSystem, sol: MixedSolution) -> float:
    gap = system.project_p0(sol.u) - system.G / system.areas
    return float(np.max(np.abs(sol.lam - np.maximum(sol.lam - gap, 0.0)), initial=0.0))


def galerkin_residual(system: MixedSystem, sol: MixedSolution, free) -> float:
    r = system.A @ sol.u - system.B.T @ sol.lam - system.F
    return float(np.max(np.abs(r[free]), initial=0.0))

