"""Bubble-enriched quadratic / piecewise-constant mixed finite elements.

Reference triangle (0,0), (1,0), (0,1) with barycentrics l0 = 1 - x - y,
l1 = x, l2 = y.  P2B local dofs: three vertex values, three edge-midpoint
values (edges 01, 12, 20) and the coefficient of the bubble 27 l0 l1 l2.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import roots_jacobi, roots_legendre

from .mesh import TriMesh


class SolverFailure(RuntimeError):
    pass


class CoefficientError(ValueError):
    pass


@lru_cache(maxsize=None)
def _collapsed_gauss(n: int):
    xg, wg = roots_legendre(n)
    # Jacobi weight (1 - s) absorbs the collapse of the square onto the triangle
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    x = (1 + xg)[:, None] * (1 - xj)[None, :] / 4
    y = np.broadcast_to((1 + xj)[None, :] / 2, x.shape)
    w = wg[:, None] * wj[None, :] / 8
    return np.stack([x.ravel(), y.ravel()]), w.ravel()


def quadrature_rule(degree: int):
    """Points (2, nq) and positive weights on the reference triangle.

    Exact for polynomials of total degree ``degree`` (0..6).
    """
    if not 0 <= degree <= 6:
        raise ValueError(f"unsupported quadrature degree {degree} (0..6)")
    return _collapsed_gauss(max(1, (degree + 2) // 2))


@lru_cache(maxsize=None)
def symmetric_rule(degree: int):
    """``quadrature_rule`` averaged over the six vertex permutations.

    Invariant under relabelling of the vertices, so reflected elements see
    mirrored points; used for the non-smooth contact integrand.
    """
    ref, w = quadrature_rule(degree)
    lam = np.stack([1 - ref[0] - ref[1], ref[0], ref[1]])
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    pts = np.concatenate([lam[[p[1], p[2]]] for p in perms], axis=1)
    return pts, np.tile(w, 6) / 6


def line_rule(n: int):
    """Gauss-Legendre points on [0, 1]."""
    x, w = roots_legendre(n)
    return 0.5 * (x + 1), 0.5 * w


REF_DOF_POINTS = np.array([[0.0, 1.0, 0.0, 0.5, 0.5, 0.0, 1 / 3],
                           [0.0, 0.0, 1.0, 0.0, 0.5, 0.5, 1 / 3]])


def p2b_shape(ref):
    """Values (7, n) and reference gradients (7, n, 2) of the P2B basis."""
    x, y = np.asarray(ref, dtype=float)
    l0, l1, l2 = 1 - x - y, x, y
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    L = (l0, l1, l2)
    vals = [L[i] * (2 * L[i] - 1) for i in range(3)]
    grads = [(4 * L[i] - 1)[:, None] * dl[i] for i in range(3)]
    for i, j in ((0, 1), (1, 2), (2, 0)):
        vals.append(4 * L[i] * L[j])
        grads.append(4 * (L[j][:, None] * dl[i] + L[i][:, None] * dl[j]))
    vals.append(27 * l0 * l1 * l2)
    grads.append(27 * ((l1 * l2)[:, None] * dl[0] + (l0 * l2)[:, None] * dl[1]
                       + (l0 * l1)[:, None] * dl[2]))
    return np.array(vals), np.array(grads)


def geometry_at(mesh: TriMesh, ref):
    """Physical points (nt, nq, 2) and Jacobians (nt, nq, 2, 2) at ``ref``."""
    ref = np.asarray(ref, dtype=float).reshape(2, -1)
    if mesh.is_quadratic:
        nodes = mesh.element_nodes()
        phi, dphi = p2b_shape(ref)
        phi, dphi = phi[:6], dphi[:6]
    else:
        nodes = mesh.vertices[mesh.triangles]
        x, y = ref
        phi = np.array([1 - x - y, x, y])
        dphi = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])[:, None, :],
                               (3, ref.shape[1], 2))
    xq = np.einsum("kq,tkd->tqd", phi, nodes)
    jac = np.einsum("kqj,tki->tqij", dphi, nodes)
    return xq, jac


def geometry_at_points(mesh: TriMesh, elems, ref):
    """Per-point variant: element ``elems[i]`` at ``ref[:, i]``."""
    ref = np.asarray(ref, dtype=float)
    elems = np.asarray(elems, dtype=np.int64)
    if mesh.is_quadratic:
        nodes = mesh.element_nodes()[elems]
        phi, dphi = p2b_shape(ref)
        phi, dphi = phi[:6], dphi[:6]
    else:
        nodes = mesh.vertices[mesh.triangles[elems]]
        x, y = ref
        phi = np.array([1 - x - y, x, y])
        dphi = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])[:, None, :],
                               (3, ref.shape[1], 2))
    xm = np.einsum("kn,nkd->nd", phi, nodes)
    jac = np.einsum("knj,nki->nij", dphi, nodes)
    return xm, jac


def _inv_det(jac):
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1] / det
    inv[..., 1, 1] = jac[..., 0, 0] / det
    inv[..., 0, 1] = -jac[..., 0, 1] / det
    inv[..., 1, 0] = -jac[..., 1, 0] / det
    return inv, det


def evaluate_field(fn, x):
    """Evaluate a scalar field given as callable or constant at x (..., 2)."""
    xt = np.moveaxis(np.asarray(x), -1, 0)
    if callable(fn):
        return np.broadcast_to(np.asarray(fn(xt), dtype=float), xt.shape[1:])
    return np.full(xt.shape[1:], float(fn))


@dataclass
class ElementGeometry:
    """Quadrature data on every element: points, weights·|detJ|, J^{-1}."""

    x: np.ndarray        # (nt, nq, 2)
    dx: np.ndarray       # (nt, nq)
    invjac: np.ndarray   # (nt, nq, 2, 2)
    ref: np.ndarray      # (2, nq)

    @classmethod
    def build(cls, mesh: TriMesh, degree: int = 6, rule=None):
        ref, w = rule if rule is not None else quadrature_rule(degree)
        x, jac = geometry_at(mesh, ref)
        inv, det = _inv_det(jac)
        return cls(x, np.abs(det) * w[None, :], inv, ref)

    def physical_gradients(self, ref_grads):
        """(nloc, nq, 2) reference gradients -> (nt, nq, nloc, 2)."""
        return np.einsum("tqji,kqj->tqki", self.invjac, ref_grads)

    @property
    def areas(self):
        return self.dx.sum(axis=1)


@dataclass
class DofBasis:
    mesh: TriMesh
    kind: str
    n: int
    element_dofs: np.ndarray  # (nt, nloc)
    entity: np.ndarray        # per dof: 0 vertex, 1 edge, 2 interior
    boundary: np.ndarray      # per dof boolean

    @classmethod
    def p2b(cls, mesh: TriMesh) -> "DofBasis":
        canon, vdof = np.unique(mesh.vertex_map, return_inverse=True)
        nvd = len(canon)
        nf, nt = mesh.nfacets, mesh.ntriangles
        edofs = np.column_stack([
            vdof.ravel()[mesh.triangles],
            nvd + mesh.tri_to_facet,
            nvd + nf + np.arange(nt)[:, None],
        ])
        entity = np.concatenate([np.zeros(nvd, int), np.ones(nf, int), np.full(nt, 2)])
        boundary = np.zeros(nvd + nf + nt, dtype=bool)
        bf = mesh.boundary_facets
        boundary[nvd + bf] = True
        bverts = np.unique(mesh.facets[bf].ravel())
        boundary[np.searchsorted(canon, bverts)] = True
        return cls(mesh, "P2B", nvd + nf + nt, edofs, entity, boundary)

    @classmethod
    def p0(cls, mesh: TriMesh) -> "DofBasis":
        nt = mesh.ntriangles
        return cls(mesh, "P0", nt, np.arange(nt)[:, None], np.full(nt, 2),
                   np.zeros(nt, dtype=bool))

    def zeros(self):
        return np.zeros(self.n)

    def boundary_dofs(self) -> np.ndarray:
        return np.nonzero(self.boundary)[0]

    def dof_points(self) -> np.ndarray:
        """(n, 2) physical location of each P2B dof (first element seen)."""
        if self.kind == "P0":
            x, _ = geometry_at(self.mesh, np.array([[1 / 3], [1 / 3]]))
            return x[:, 0]
        x, _ = geometry_at(self.mesh, REF_DOF_POINTS)
        out = np.zeros((self.n, 2))
        flat = self.element_dofs.ravel()
        first = np.unique(flat[::-1], return_index=True)[1]
        first = len(flat) - 1 - first
        out[flat[first]] = x.reshape(-1, 2)[first]
        return out

    def from_point_values(self, values) -> np.ndarray:
        """Coefficients from values (nt, 7) at the local dof points."""
        values = np.asarray(values, dtype=float)
        if self.kind == "P0":
            return values.reshape(-1).copy()
        coef = np.zeros(self.n)
        coef[self.element_dofs[:, :6].ravel()] = values[:, :6].ravel()
        # bubble absorbs the centroid mismatch of the P2 part
        phi_c, _ = p2b_shape(np.array([[1 / 3], [1 / 3]]))
        p2_at_c = values[:, :6] @ phi_c[:6, 0]
        coef[self.element_dofs[:, 6]] = values[:, 6] - p2_at_c
        return coef

    def interpolate(self, fn) -> np.ndarray:
        x, _ = geometry_at(self.mesh, REF_DOF_POINTS if self.kind == "P2B" else [[1 / 3], [1 / 3]])
        return self.from_point_values(evaluate_field(fn, x))

    def evaluate(self, coef, elems, ref, grad: bool = False):
        """Values (and physical gradients) at reference points ``ref[:, i]`` of ``elems[i]``."""
        elems = np.asarray(elems, dtype=np.int64)
        c = np.asarray(coef)[self.element_dofs[elems]]
        if self.kind == "P0":
            return (c[:, 0], np.zeros((len(elems), 2))) if grad else c[:, 0]
        phi, dphi = p2b_shape(ref)
        val = np.einsum("nk,kn->n", c, phi)
        if not grad:
            return val
        _, jac = geometry_at_points(self.mesh, elems, ref)
        inv, _ = _inv_det(jac)
        g_ref = np.einsum("nk,knd->nd", c, dphi)
        return val, np.einsum("nji,nj->ni", inv, g_ref)

    def evaluate_at(self, coef, points, hint=None):
        from .mesh import locate_points

        loc = locate_points(self.mesh, points, hint=hint)
        return self.evaluate(coef, loc.elements, loc.ref), loc


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.rhs)


@dataclass
class MixedSystem:
    """Blocks of the mixed saddle-point system.

    Full matrix [[A, -Bᵀ], [-B, 0]], rhs [F, -G], unknowns [u, λ].  ``B[K, i]``
    is the integral of basis function ``i`` over element ``K``.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    F: np.ndarray
    G: np.ndarray
    areas: np.ndarray
    V: DofBasis
    Q: DofBasis

    @property
    def nu(self) -> int:
        return self.V.n

    def linear_system(self) -> LinearSystem:
        nq = self.Q.n
        K = sp.bmat([[self.A, -self.B.T], [-self.B, sp.csr_matrix((nq, nq))]], format="csr")
        return LinearSystem(K, np.concatenate([self.F, -self.G]))

    def project_p0(self, u) -> np.ndarray:
        """Elementwise mean of the P2B function ``u``."""
        return (self.B @ u) / self.areas


def assemble_mixed(problem, V: DofBasis, Q: DofBasis, degree: int = 6) -> MixedSystem:
    mesh = V.mesh
    geo = ElementGeometry.build(mesh, degree)
    phi, dphi = p2b_shape(geo.ref)
    grads = geo.physical_gradients(dphi)
    a = evaluate_field(problem.coefficient, geo.x)
    bad = np.nonzero(~(a > 0).all(axis=1))[0]
    if len(bad):
        raise CoefficientError(f"non-positive coefficient on element {int(bad[0])}")
    ke = np.einsum("tq,tqid,tqjd->tij", geo.dx * a, grads, grads)
    be = np.einsum("tq,iq->ti", geo.dx, phi)
    f = evaluate_field(problem.load, geo.x)
    fe = np.einsum("tq,iq->ti", geo.dx * f, phi)
    g = evaluate_field(problem.obstacle, geo.x)
    gvec = np.sum(geo.dx * g, axis=1)

    dofs = V.element_dofs
    nt = mesh.ntriangles
    rows = np.repeat(dofs, 7, axis=1).ravel()
    cols = np.tile(dofs, (1, 7)).ravel()
    A = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(V.n, V.n)).tocsr()
    A = 0.5 * (A + A.T)
    B = sp.coo_matrix((be.ravel(), (np.repeat(np.arange(nt), 7), dofs.ravel())),
                      shape=(Q.n, V.n)).tocsr()
    F = np.bincount(dofs.ravel(), weights=fe.ravel(), minlength=V.n)
    return MixedSystem(A, B, F, gvec, geo.areas, V, Q)


def l2_project_p0(field, Q: DofBasis, V: DofBasis | None = None, degree: int = 6) -> np.ndarray:
    """Elementwise mean ``(1/|K|) ∫_K field``.

    ``field`` is a callable/constant, or a P2B coefficient vector when ``V``
    is given.
    """
    geo = ElementGeometry.build(Q.mesh, degree)
    if V is not None:
        phi, _ = p2b_shape(geo.ref)
        vals = np.einsum("tk,kq->tq", np.asarray(field)[V.element_dofs], phi)
    else:
        vals = evaluate_field(field, geo.x)
    return np.sum(geo.dx * vals, axis=1) / geo.areas


@dataclass
class Condensed:
    system: LinearSystem
    free: np.ndarray
    fixed: np.ndarray
    values: np.ndarray
    n: int

    def expand(self, x_free) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.fixed] = self.values
        x[self.free] = x_free
        return x


def condense(system: LinearSystem, fixed_dofs, fixed_values=0.0) -> Condensed:
    fixed = np.asarray(fixed_dofs, dtype=np.int64).ravel()
    if len(np.unique(fixed)) != len(fixed):
        raise ValueError("duplicate fixed dof indices")
    n = system.dim
    values = np.broadcast_to(np.asarray(fixed_values, dtype=float), fixed.shape).copy()
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.nonzero(mask)[0]
    K = system.matrix
    x_fixed = np.zeros(n)
    x_fixed[fixed] = values
    rhs = system.rhs - K @ x_fixed
    Kf = K[free][:, free]
    return Condensed(LinearSystem(Kf.tocsr(), rhs[free]), free, fixed, values, n)


def solve_linear(system: LinearSystem, rtol: float = 1e-10) -> np.ndarray:
    """Sparse direct solve with a residual check and one refinement step."""
    if system.dim == 0:
        return np.zeros(0)
    K = system.matrix.tocsc()
    b = system.rhs
    try:
        lu = spla.splu(K, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverFailure(f"factorization failed: {exc}") from exc
    x = lu.solve(b)
    normK = spla.norm(K, ord=1)

    def bound(x):
        return rtol * (np.linalg.norm(b) + normK * np.linalg.norm(x))

    r = b - K @ x
    if not np.all(np.isfinite(x)):
        raise SolverFailure("non-finite solution (singular pivot)")
    if np.linalg.norm(r) > bound(x):
        x = x + lu.solve(r)
        r = b - K @ x
        if np.linalg.norm(r) > bound(x):
            raise SolverFailure(
                f"residual {np.linalg.norm(r):.3e} exceeds bound {bound(x):.3e}")
    return x


def element_mean(values_q, geo: ElementGeometry):
    return np.sum(geo.dx * values_q, axis=1) / geo.areas


FieldFn = Callable[[np.ndarray], np.ndarray]
