"""Signed distance fields and a distmesh-style initial mesh generator.

Sign convention: negative inside the domain, positive outside.  Points are
passed as arrays of shape ``(2, ...)`` throughout the package.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import Delaunay

logger = logging.getLogger(__name__)


class InvalidShapeError(ValueError):
    pass


@dataclass(frozen=True)
class SignedDistanceField:
    """Evaluable signed distance ``eval(x)`` with ``x`` of shape (2, ...)."""

    fn: Callable[[np.ndarray], np.ndarray]
    grad_step: float = 1e-7

    def eval(self, x) -> np.ndarray:
        return self.fn(np.asarray(x, dtype=float))

    __call__ = eval

    def grad(self, x) -> np.ndarray:
        """Central finite-difference gradient, shape (2, ...)."""
        x = np.asarray(x, dtype=float)
        h = self.grad_step
        ex = np.zeros_like(x)
        ex[0] = h
        ey = np.zeros_like(x)
        ey[1] = h
        return np.stack([
            (self.fn(x + ex) - self.fn(x - ex)) / (2 * h),
            (self.fn(x + ey) - self.fn(x - ey)) / (2 * h),
        ])


def _positive(name, value):
    if not np.all(np.asarray(value, dtype=float) > 0):
        raise InvalidShapeError(f"{name} must be positive, got {value!r}")


def rectangle(center, half_widths, grad_step=1e-7) -> SignedDistanceField:
    _positive("half_widths", half_widths)
    c = np.asarray(center, dtype=float)
    hw = np.asarray(half_widths, dtype=float)

    def fn(x):
        q0 = np.abs(x[0] - c[0]) - hw[0]
        q1 = np.abs(x[1] - c[1]) - hw[1]
        outside = np.hypot(np.maximum(q0, 0.0), np.maximum(q1, 0.0))
        return outside + np.minimum(np.maximum(q0, q1), 0.0)

    return SignedDistanceField(fn, grad_step)


def circle(center, radius, grad_step=1e-7) -> SignedDistanceField:
    _positive("radius", radius)
    c = np.asarray(center, dtype=float)

    def fn(x):
        return np.hypot(x[0] - c[0], x[1] - c[1]) - radius

    return SignedDistanceField(fn, grad_step)


def halfplane(point, normal, grad_step=1e-7) -> SignedDistanceField:
    """Half-plane ``{x : (x - point)·normal <= 0}``; ``normal`` points outward."""
    n = np.asarray(normal, dtype=float)
    nrm = np.linalg.norm(n)
    if nrm == 0:
        raise InvalidShapeError("halfplane normal must be nonzero")
    n = n / nrm
    p = np.asarray(point, dtype=float)

    def fn(x):
        return (x[0] - p[0]) * n[0] + (x[1] - p[1]) * n[1]

    return SignedDistanceField(fn, grad_step)


def union(a: SignedDistanceField, b: SignedDistanceField) -> SignedDistanceField:
    return SignedDistanceField(lambda x: np.minimum(a.fn(x), b.fn(x)),
                               min(a.grad_step, b.grad_step))


def intersection(a: SignedDistanceField, b: SignedDistanceField) -> SignedDistanceField:
    return SignedDistanceField(lambda x: np.maximum(a.fn(x), b.fn(x)),
                               min(a.grad_step, b.grad_step))


def difference(a: SignedDistanceField, b: SignedDistanceField) -> SignedDistanceField:
    return SignedDistanceField(lambda x: np.maximum(a.fn(x), -b.fn(x)),
                               min(a.grad_step, b.grad_step))


def scaled(a: SignedDistanceField, factor: float) -> SignedDistanceField:
    """The same shape with all lengths multiplied by ``factor``."""
    _positive("factor", factor)
    return SignedDistanceField(lambda x: factor * a.fn(x / factor),
                               a.grad_step * factor)


def sdf_primitives(kind: str, *args, **kwargs) -> SignedDistanceField:
    """Build a primitive or combinator by name."""
    table = {
        "rectangle": rectangle,
        "circle": circle,
        "halfplane": halfplane,
        "union": union,
        "intersection": intersection,
        "difference": difference,
    }
    try:
        return table[kind](*args, **kwargs)
    except KeyError:
        raise InvalidShapeError(f"unknown shape kind {kind!r}") from None


def _polygon_convex(points) -> SignedDistanceField:
    # intersection of half-planes; points in counterclockwise order
    pts = np.asarray(points, dtype=float)
    out = None
    for i in range(len(pts)):
        a, b = pts[i], pts[(i + 1) % len(pts)]
        t = b - a
        hp = halfplane(a, (t[1], -t[0]))
        out = hp if out is None else intersection(out, hp)
    return out


def _line_intersection(p, d, q, e):
    # p + s d = q + t e
    m = np.array([[d[0], -e[0]], [d[1], -e[1]]])
    s, _ = np.linalg.solve(m, np.asarray(q) - np.asarray(p))
    return np.asarray(p) + s * np.asarray(d)


@dataclass(frozen=True)
class ProfileIPN80:
    """I-profile dimensions in millimetres (DIN 1025-1 IPN 80 by default).

    ``t_f`` is the flange thickness measured at a quarter of the flange width
    from the flange tip; the inner flange face has slope ``slope``.
    """

    h: float = 80.0
    b: float = 42.0
    t_w: float = 3.9
    t_f: float = 5.9
    r1: float = 3.9
    r2: float = 2.3
    slope: float = 0.14

    def __post_init__(self):
        for name in ("h", "b", "t_w", "t_f", "r1", "r2"):
            _positive(name, getattr(self, name))
        if self.slope < 0:
            raise InvalidShapeError("slope must be non-negative")
        if not self.t_w < self.b:
            raise InvalidShapeError("web thickness must be smaller than flange width")
        if not self.t_f < self.h / 2:
            raise InvalidShapeError("flange thickness must be smaller than h/2")

    def inner_flange_y(self, x):
        """y-coordinate of the inner face of the top flange at |x|."""
        x_ref = self.b / 4
        return self.h / 2 - self.t_f - self.slope * (x_ref - np.abs(x))

    @property
    def area_nominal(self) -> float:
        """Area without fillets/toe rounding, in mm²."""
        half = (self.b - self.t_w) / 2
        mean_thickness = self.h / 2 - self.inner_flange_y(self.t_w / 2 + half / 2)
        return self.t_w * self.h + 4 * half * mean_thickness


def _fillet_region(p_corner, d1, d2, radius):
    """Region between a corner and an arc of ``radius`` tangent to both legs.

    ``d1``, ``d2`` are unit vectors pointing from the corner along the legs.
    Returns (sdf of region, tangent points).
    """
    d1 = np.asarray(d1, float) / np.linalg.norm(d1)
    d2 = np.asarray(d2, float) / np.linalg.norm(d2)
    half_angle = 0.5 * np.arccos(np.clip(d1 @ d2, -1.0, 1.0))
    dist = radius / np.tan(half_angle)
    t1 = p_corner + dist * d1
    t2 = p_corner + dist * d2
    bis = (d1 + d2) / np.linalg.norm(d1 + d2)
    center = p_corner + radius / np.sin(half_angle) * bis
    tri = np.array([p_corner, t1, t2])
    # orient counterclockwise
    cross = (t1 - p_corner)[0] * (t2 - p_corner)[1] - (t1 - p_corner)[1] * (t2 - p_corner)[0]
    if cross < 0:
        tri = tri[[0, 2, 1]]
    region = difference(_polygon_convex(tri), circle(center, radius))
    return region, (t1, t2)


def sdf_ipn80(profile: ProfileIPN80 | None = None) -> SignedDistanceField:
    """Signed distance field (mm) of an I-profile centred at its centroid."""
    pr = profile or ProfileIPN80()
    h, b, tw = pr.h, pr.b, pr.t_w
    s = pr.slope

    web = rectangle((0.0, 0.0), (tw / 2, h / 2))
    # top flange, evaluated on the folded quadrant so it covers both flanges
    y_web = pr.inner_flange_y(0.0)
    flange = intersection(
        rectangle((0.0, 0.0), (b / 2, h / 2)),
        intersection(halfplane((0.0, y_web), (s, -1.0)),
                     halfplane((0.0, y_web), (-s, -1.0))),
    )
    body = union(web, flange)

    # root fillet between web face and inner flange face
    corner = np.array([tw / 2, pr.inner_flange_y(tw / 2)])
    d_web = np.array([0.0, -1.0])
    d_flange = np.array([1.0, s]) / np.hypot(1.0, s)
    root, _ = _fillet_region(corner, d_web, d_flange, pr.r1)
    body = union(body, root)

    # toe rounding at the flange tip
    tip = np.array([b / 2, pr.inner_flange_y(b / 2)])
    toe, _ = _fillet_region(tip, np.array([0.0, 1.0]), -d_flange, pr.r2)
    body = difference(body, toe)

    def fn(x):
        folded = np.stack([np.abs(x[0]), np.abs(x[1])])
        return body.fn(folded)

    return SignedDistanceField(fn, 1e-6)


def distance_to_boundary(sdf: SignedDistanceField, points) -> np.ndarray:
    """δ = max(-sdf, 0)."""
    return np.maximum(-sdf.eval(points), 0.0)


@dataclass
class DistmeshResult:
    vertices: np.ndarray
    triangles: np.ndarray
    converged: bool
    iterations: int
    warnings: list = field(default_factory=list)


def _project_to_zero(sdf, p, tol, max_iter=20):
    """Newton projection of points (n, 2) onto the zero level set."""
    p = p.copy()
    for _ in range(max_iter):
        d = sdf.eval(p.T)
        todo = np.abs(d) > tol
        if not todo.any():
            break
        g = sdf.grad(p[todo].T).T
        gg = np.sum(g ** 2, axis=1)
        ok = gg > 0
        idx = np.nonzero(todo)[0][ok]
        p[idx] -= (d[todo][ok] / gg[ok])[:, None] * g[ok]
    return p


def distmesh_generate(sdf: SignedDistanceField, h0: float, bbox, fixed=None,
                      max_iter: int = 200, seed_quality: bool = True):
    """Uniform-size Persson–Strang mesh of ``{sdf <= 0}``.

    Returns a :class:`obstakl.mesh.TriMesh`; the ``converged`` flag of the
    underlying iteration is stored in ``mesh.info``.
    """
    from .mesh import TriMesh

    if not h0 > 0:
        raise ValueError("h0 must be positive")
    (xmin, ymin), (xmax, ymax) = np.asarray(bbox, dtype=float)
    geps = 1e-3 * h0
    dptol = 1e-3
    ttol = 0.1
    fscale = 1.2
    deltat = 0.2

    # equilateral seed lattice
    ys = np.arange(ymin, ymax + h0 * np.sqrt(3) / 2 * 0.5, h0 * np.sqrt(3) / 2)
    xs = np.arange(xmin, xmax + h0 * 0.5, h0)
    X, Y = np.meshgrid(xs, ys)
    X[1::2, :] += h0 / 2
    p = np.column_stack([X.ravel(), Y.ravel()])
    p = p[sdf.eval(p.T) < geps]
    pfix = np.zeros((0, 2)) if fixed is None else np.asarray(fixed, dtype=float).reshape(-1, 2)
    if len(pfix):
        keep = np.min(np.linalg.norm(p[:, None, :] - pfix[None, :, :], axis=2), axis=1) > 0.5 * h0
        p = np.vstack([pfix, p[keep]])
    if len(p) < 3:
        raise ValueError("empty domain: no seed points inside the distance field")
    nfix = len(pfix)

    pold = np.full_like(p, np.inf)
    t = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.linalg.norm(p - pold, axis=1)) / h0 > ttol:
            pold = p.copy()
            t = Delaunay(p).simplices
            centroids = p[t].mean(axis=1)
            t = t[sdf.eval(centroids.T) < -geps]
            bars = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [0, 2]]])
            bars = np.unique(np.sort(bars, axis=1), axis=0)
        barvec = p[bars[:, 0]] - p[bars[:, 1]]
        length = np.linalg.norm(barvec, axis=1)
        l0 = fscale * np.sqrt(np.sum(length ** 2) / len(length))
        force = np.maximum(l0 - length, 0.0)
        fvec = (force / length)[:, None] * barvec
        ftot = np.zeros_like(p)
        np.add.at(ftot, bars[:, 0], fvec)
        np.add.at(ftot, bars[:, 1], -fvec)
        ftot[:nfix] = 0.0
        p = p + deltat * ftot
        d = sdf.eval(p.T)
        out = d > 0
        if out.any():
            g = sdf.grad(p[out].T).T
            gg = np.sum(g ** 2, axis=1)
            gg[gg == 0] = 1.0
            p[out] -= (d[out] / gg)[:, None] * g
        inside = d < -geps
        move = np.linalg.norm(deltat * ftot[inside], axis=1)
        if len(move) == 0 or np.max(move) / h0 < dptol:
            converged = True
            break

    t = Delaunay(p).simplices
    centroids = p[t].mean(axis=1)
    t = t[sdf.eval(centroids.T) < -geps]

    # drop unused points, orient counterclockwise
    used = np.unique(t)
    remap = -np.ones(len(p), dtype=np.int64)
    remap[used] = np.arange(len(used))
    p = p[used]
    t = remap[t]
    e1 = p[t[:, 1]] - p[t[:, 0]]
    e2 = p[t[:, 2]] - p[t[:, 0]]
    neg = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    t[neg] = t[neg][:, [0, 2, 1]]

    mesh = TriMesh.from_arrays(p, t)
    bverts = mesh.boundary_vertices()
    p = mesh.vertices.copy()
    p[bverts] = _project_to_zero(sdf, p[bverts], 1e-4 * geps)
    mesh = TriMesh.from_arrays(p, mesh.triangles)
    warnings = [] if converged else [f"distmesh did not converge in {max_iter} iterations"]
    for w in warnings:
        logger.warning(w)
    mesh.info["distmesh"] = DistmeshResult(p, mesh.triangles, converged, it, warnings)
    return mesh
