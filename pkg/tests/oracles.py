"""Independent oracles: a Fourier series for the Poisson centre value and a
re-evaluation of the residual indicator integrals on affine meshes.

Second derivatives come from exact symbolic Hessians of the P2 + bubble
basis, area integrals from a Duffy-collapsed Gauss-Legendre rule (degree
2n-2 exact), edge integrals from 8-point Gauss-Legendre. No quadrature, flux
recovery or point location is shared with the package.
"""
from functools import lru_cache

import numpy as np
import sympy as sy

X, Y = sy.symbols("x y")


@lru_cache(maxsize=None)
def _symbolic():
    L = [1 - X - Y, X, Y]
    funcs = [l * (2 * l - 1) for l in L] + [4 * L[k] * L[(k + 1) % 3] for k in range(3)]
    funcs.append(27 * L[0] * L[1] * L[2])
    val = [sy.lambdify((X, Y), f, "numpy") for f in funcs]
    grad = [[sy.lambdify((X, Y), sy.diff(f, v), "numpy") for v in (X, Y)] for f in funcs]
    hess = [[[sy.lambdify((X, Y), sy.diff(f, a, b), "numpy") for b in (X, Y)] for a in (X, Y)]
            for f in funcs]
    return val, grad, hess


def _ev(fn, x, y):
    return np.broadcast_to(np.asarray(fn(x, y), float), x.shape)


def shape(ref):
    """Values (7, q), reference gradients (7, q, 2), reference Hessians (7, q, 2, 2)."""
    val, grad, hess = _symbolic()
    x, y = np.asarray(ref[0], float), np.asarray(ref[1], float)
    v = np.stack([_ev(f, x, y) for f in val])
    g = np.stack([np.stack([_ev(f, x, y) for f in row], axis=-1) for row in grad])
    h = np.stack([np.stack([np.stack([_ev(f, x, y) for f in r], axis=-1) for r in m], axis=-2)
                  for m in hess])
    return v, g, h


def duffy_rule(n=5):
    """Collapsed Gauss-Legendre rule on the reference triangle, exact to degree 2n-2."""
    t, w = np.polynomial.legendre.leggauss(n)
    t, w = 0.5 * (t + 1), 0.5 * w
    U, V = np.meshgrid(t, t, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    return np.stack([U.ravel(), (V * (1 - U)).ravel()]), (WU * WV * (1 - U)).ravel()


def indicators_oracle(mesh, V, u, lam, f, g, g_grad, coefficient=1.0, n=5):
    """(eta_int², eta_edge², eta_contact²) per element; non-periodic affine mesh, constant a."""
    p = mesh.vertices[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    Jinv = np.linalg.inv(J)
    area = 0.5 * np.abs(np.linalg.det(J))
    h = np.max(np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2), axis=1)
    c = u[V.element_dofs]

    ref, w = duffy_rule(n)
    phi, dphi, H = shape(ref)
    x = np.moveaxis(p[:, 0, None, :] + np.einsum("tij,jq->tqi", J, ref), -1, 0)
    uval = np.einsum("tk,kq->tq", c, phi)
    grad = np.einsum("tji,tqj->tqi", Jinv, np.einsum("tk,kqd->tqd", c, dphi))
    hx = np.einsum("tai,tqab,tbj->tqij", Jinv, np.einsum("tk,kqij->tqij", c, H), Jinv)
    lap = coefficient * (hx[..., 0, 0] + hx[..., 1, 1])
    dx = 2 * area[:, None] * w[None, :]
    eta_int = h ** 2 * np.sum(dx * (lap + lam[:, None] + f(x)) ** 2, axis=1)

    gx = g(x)
    pos = np.maximum(gx - uval, 0)
    dpos = np.where((gx > uval)[..., None], np.moveaxis(g_grad(x), 0, -1) - grad, 0.0)
    eta_c = (np.sum(dx * (pos ** 2 + np.sum(dpos ** 2, axis=-1)), axis=1)
             + np.sum(dx * pos, axis=1) * lam)

    s, ws = np.polynomial.legendre.leggauss(8)
    s, ws = 0.5 * (s + 1), 0.5 * ws
    eta_edge = np.zeros(mesh.ntriangles)
    for t1, t2 in mesh.facet_to_tri:
        if t2 < 0:
            continue
        a, b = (mesh.vertices[i] for i in np.intersect1d(mesh.triangles[t1], mesh.triangles[t2]))
        L = np.linalg.norm(b - a)
        n = np.array([b[1] - a[1], a[0] - b[0]]) / L
        pts = a[None] + s[:, None] * (b - a)[None]
        gr = []
        for t in (t1, t2):
            r = np.linalg.solve(J[t], (pts - p[t, 0]).T)
            gr.append(np.einsum("k,kqd->qd", c[t], shape(r)[1]) @ Jinv[t])
        E = L * np.sum(ws * (coefficient * (gr[0] - gr[1]) @ n) ** 2)
        eta_edge[t1] += 0.5 * h[t1] * E
        eta_edge[t2] += 0.5 * h[t2] * E
    return eta_int, eta_edge, eta_c


def fourier_center_value(terms=4001):
    # -Δu = 1 on the unit square, u = 0 on the boundary, evaluated at (1/2, 1/2)
    k = np.arange(1, terms, 2, dtype=float)
    m, n = np.meshgrid(k, k, indexing="ij")
    sgn = np.sin(m * np.pi / 2) * np.sin(n * np.pi / 2)
    return 16 / np.pi ** 4 * np.sum(sgn / (m * n * (m ** 2 + n ** 2)))
