"""Residual error indicators, maximum marking and the adaptive driver."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import mesh as meshmod
from .applications import ObstacleProblem
from .fem import (DofBasis, ElementGeometry, evaluate_field, geometry_at_points, line_rule,
                  p2b_shape, symmetric_rule)
from .solver import MixedSolution, NonConvergenceError, PdasReport, pdas_solve, warm_start

logger = logging.getLogger(__name__)

_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass
class IndicatorField:
    """Squared per-element indicator parts."""

    eta_int: np.ndarray
    eta_edge: np.ndarray
    eta_contact: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.eta_int + self.eta_edge + self.eta_contact

    @property
    def global_value(self) -> float:
        return float(np.sqrt(np.sum(self.total)))

    def part_norms(self) -> dict:
        return {k: float(np.sqrt(np.sum(getattr(self, k))))
                for k in ("eta_int", "eta_edge", "eta_contact")}


def _monomials_p3(ref):
    """Values (10, nq) and reference gradients (10, nq, 2) of 1, x, y, ..., y³."""
    x, y = ref
    powers = [(i, j) for d in range(4) for i in range(d, -1, -1) for j in [d - i]]
    vals, grads = [], []
    for i, j in powers:
        vals.append(x ** i * y ** j)
        dx = i * x ** max(i - 1, 0) * y ** j if i else np.zeros_like(x)
        dy = j * x ** i * y ** max(j - 1, 0) if j else np.zeros_like(x)
        grads.append(np.stack([dx, dy], axis=-1))
    return np.array(vals), np.array(grads)


def recovered_divergence(flux, geo: ElementGeometry) -> np.ndarray:
    """Divergence of the elementwise L2 projection of ``flux`` onto discontinuous P3.

    ``flux`` has shape (nt, nq, 2); returns (nt, nq).
    """
    psi, dpsi = _monomials_p3(geo.ref)
    mass = np.einsum("tq,iq,jq->tij", geo.dx, psi, psi)
    rhs = np.einsum("tq,iq,tqd->tid", geo.dx, psi, flux)
    coef = np.linalg.solve(mass, rhs)                      # (nt, 10, 2)
    gpsi = geo.physical_gradients(dpsi)                    # (nt, nq, 10, 2)
    return np.einsum("tid,tqid->tq", coef, gpsi)


def _u_at_quadrature(V: DofBasis, u, geo: ElementGeometry):
    phi, dphi = p2b_shape(geo.ref)
    c = u[V.element_dofs]
    val = np.einsum("tk,kq->tq", c, phi)
    grad = np.einsum("tk,tqkd->tqd", c, geo.physical_gradients(dphi))
    return val, grad


def _edge_jumps(V: DofBasis, u, coefficient, npts: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """∫_E (a ⟦∇u·n⟧)² ds for every interior facet; returns (facets, values)."""
    mesh = V.mesh
    interior = np.nonzero(mesh.facet_to_tri[:, 1] >= 0)[0]
    if len(interior) == 0:
        return interior, np.zeros(0)
    s, w = line_rule(npts)
    t1 = mesh.facet_to_tri[interior, 0]
    t2 = mesh.facet_to_tri[interior, 1]
    k1 = np.argmax(mesh.tri_to_facet[t1] == interior[:, None], axis=1)
    k2 = np.argmax(mesh.tri_to_facet[t2] == interior[:, None], axis=1)

    def ref_points(t, k):
        start = mesh.vertex_map[mesh.triangles[t, k]]
        forward = start == mesh.facets[interior, 0]
        a = _REF_VERTS[k]
        b = _REF_VERTS[(k + 1) % 3]
        sp = np.where(forward[:, None], s[None, :], 1 - s[None, :])   # (nf, np)
        pts = a[:, None, :] + sp[..., None] * (b - a)[:, None, :]
        return pts, b - a

    p1, d1 = ref_points(t1, k1)
    p2, _ = ref_points(t2, k2)
    n = len(interior)
    e1 = np.repeat(t1, npts)
    e2 = np.repeat(t2, npts)
    r1 = p1.reshape(-1, 2).T
    r2 = p2.reshape(-1, 2).T
    _, g1 = V.evaluate(u, e1, r1, grad=True)
    _, g2 = V.evaluate(u, e2, r2, grad=True)
    x1, jac = geometry_at_points(mesh, e1, r1)
    tangent = np.einsum("nij,nj->ni", jac, np.repeat(d1, npts, axis=0))
    tl = np.linalg.norm(tangent, axis=1)
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1) / tl[:, None]
    a = evaluate_field(coefficient, x1)
    jump = a * np.sum((g1 - g2) * normal, axis=1)
    vals = (jump ** 2 * tl * np.tile(w, n)).reshape(n, npts).sum(axis=1)
    return interior, vals


def _indicators(solution: MixedSolution, problem: ObstacleProblem, weight=None,
                degree: int = 6) -> IndicatorField:
    V = solution.V
    mesh = V.mesh
    geo = ElementGeometry.build(mesh, degree)
    h = mesh.element_h()
    u, lam = solution.u, solution.lam

    val, grad = _u_at_quadrature(V, u, geo)
    a = evaluate_field(problem.coefficient, geo.x)
    div = recovered_divergence(a[..., None] * grad, geo)
    f = evaluate_field(problem.load, geo.x)
    r = div + lam[:, None] + f
    eta_int = h ** 2 * np.sum(geo.dx * r ** 2, axis=1)

    facets, jumps = _edge_jumps(V, u, problem.coefficient)
    per_facet = np.zeros(mesh.nfacets)
    per_facet[facets] = jumps
    eta_edge = 0.5 * h * per_facet[mesh.tri_to_facet].sum(axis=1)

    # (g - u)+ has a kink; a permutation-symmetric rule keeps mirrored elements equal
    sgeo = ElementGeometry.build(mesh, rule=symmetric_rule(degree))
    val, grad = _u_at_quadrature(V, u, sgeo)
    gu = evaluate_field(problem.obstacle, sgeo.x) - val
    pos = np.maximum(gu, 0.0)
    gg = np.moveaxis(problem.obstacle_gradient(np.moveaxis(sgeo.x, -1, 0)), 0, -1)
    dpos = np.where((gu > 0)[..., None], gg - grad, 0.0)
    eta_contact = np.sum(sgeo.dx * (pos ** 2 + np.sum(dpos ** 2, axis=-1)), axis=1) \
        + np.sum(sgeo.dx * pos, axis=1) * lam

    if weight is not None:
        eta_int = eta_int / weight
        eta_edge = eta_edge / weight
    return IndicatorField(eta_int, eta_edge, eta_contact)


def compute_indicators(solution: MixedSolution, problem: ObstacleProblem, mesh=None) -> IndicatorField:
    """Residual indicators: interior residual, half-weighted normal-flux jumps, contact."""
    if mesh is not None and mesh is not solution.V.mesh:
        raise ValueError("solution does not live on the given mesh")
    return _indicators(solution, problem)


def compute_indicators_weighted(solution: MixedSolution, problem: ObstacleProblem, mesh=None,
                                d_field=None) -> IndicatorField:
    """Indicators with interior and jump terms scaled by 1/d_K³ (d_K = mean of d on K)."""
    if mesh is not None and mesh is not solution.V.mesh:
        raise ValueError("solution does not live on the given mesh")
    d_field = d_field if d_field is not None else problem.meta["gap"]
    geo = ElementGeometry.build(solution.V.mesh, 6)
    d = evaluate_field(d_field, geo.x)
    dK = np.sum(geo.dx * d, axis=1) / geo.areas
    if np.any(dK <= 0):
        raise ValueError(f"non-positive mean gap on element {int(np.argmax(dK <= 0))}")
    return _indicators(solution, problem, weight=dK ** 3)


def dual_norm_surrogate(mu, mesh) -> float:
    """sqrt(Σ_K h_K² ‖μ‖²_{L²(K)}) for a piecewise-constant μ."""
    geo = ElementGeometry.build(mesh, 1)
    mu = np.asarray(mu, dtype=float)
    return float(np.sqrt(np.sum(mesh.element_h() ** 2 * mu ** 2 * geo.areas)))


def mark_maximum(indicators: IndicatorField | np.ndarray, beta: float = 0.5) -> np.ndarray:
    """Indices of elements with E_K >= beta max E."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    total = indicators.total if isinstance(indicators, IndicatorField) else np.asarray(indicators)
    E = np.sqrt(total)
    marked = np.nonzero(E >= beta * E.max())[0]
    return np.union1d(marked, [int(np.argmax(E))])


@dataclass
class AdaptiveRecord:
    level: int
    N: int
    eta_total: float
    eta_int: float
    eta_edge: float
    eta_contact: float
    pdas_iters: int
    seconds: float


@dataclass
class AdaptOptions:
    smooth_sweeps: int = 0
    project_boundary: bool = False
    quadratic: bool = False
    sdf: object = None
    warm_start: bool = True
    uniform: bool = False
    weighted: bool = False
    tol: float = 1e-10
    max_iter: int = 100


@dataclass
class LevelResult:
    mesh: meshmod.TriMesh
    solution: MixedSolution
    indicators: IndicatorField
    record: AdaptiveRecord
    report: PdasReport
    marked: np.ndarray | None = None
    refined: meshmod.TriMesh | None = None   # next mesh before projection/smoothing
    parent: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def estimate(solution, problem, options: AdaptOptions):
    if options.weighted:
        return compute_indicators_weighted(solution, problem)
    return compute_indicators(solution, problem)


def adapt_loop(problem: ObstacleProblem, mesh0: meshmod.TriMesh, levels: int,
               beta: float = 0.5, options: AdaptOptions | None = None) -> list[LevelResult]:
    """Solve, estimate, mark and refine ``levels`` times (last level not refined)."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    opts = options or AdaptOptions()
    results: list[LevelResult] = []
    mesh = mesh0
    prev = None
    parent = None
    for level in range(levels):
        t0 = time.perf_counter()
        V, Q = DofBasis.p2b(mesh), DofBasis.p0(mesh)
        initial = None
        if opts.warm_start and prev is not None:
            initial = warm_start(prev, V, Q, parent)
        try:
            sol, report = pdas_solve(problem, V, Q, initial, opts.tol, opts.max_iter)
        except NonConvergenceError as exc:
            err = NonConvergenceError(f"level {level}: {exc}", exc.report)
            err.level = level
            raise err from exc
        ind = estimate(sol, problem, opts)
        parts = ind.part_norms()
        rec = AdaptiveRecord(level, V.n + Q.n, ind.global_value, parts["eta_int"],
                             parts["eta_edge"], parts["eta_contact"], report.iterations,
                             time.perf_counter() - t0)
        res = LevelResult(mesh, sol, ind, rec, report)
        results.append(res)
        logger.info("level %d: N=%d eta=%.4e iters=%d", level, rec.N, rec.eta_total,
                    rec.pdas_iters)
        if level == levels - 1:
            break
        marked = np.arange(mesh.ntriangles) if opts.uniform else mark_maximum(ind, beta)
        refined, parent = meshmod.rgb_refine(mesh, marked)
        new = refined
        if opts.project_boundary and opts.sdf is not None:
            new = meshmod.project_boundary_nodes(new, opts.sdf)
        if opts.smooth_sweeps:
            new = meshmod.laplacian_smooth(new, opts.sdf, opts.smooth_sweeps)
        if opts.quadratic:
            new = meshmod.lift_quadratic(new, opts.sdf)
        res.marked, res.refined, res.parent = marked, refined, parent
        res.record.seconds = time.perf_counter() - t0
        prev = sol
        mesh = new
    return results

