"""Obstacle problems for membrane contact, plastic torsion and bearing cavitation.

All builders work in SI units.  Callables take points of shape (2, ...).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geometry, mesh as meshmod
from .fem import DofBasis, evaluate_field


class InfeasibleObstacleError(ValueError):
    pass


Field = Callable[[np.ndarray], np.ndarray] | float


@dataclass(frozen=True)
class ObstacleProblem:
    """Data of ``-div(a grad u) >= f, u >= g, complementarity, u = dirichlet on the boundary``."""

    coefficient: Field
    load: Field
    obstacle: Field
    obstacle_grad: Callable[[np.ndarray], np.ndarray] | None = None
    dirichlet: float = 0.0
    periodic: bool = False
    period: float | None = None
    scale: float = 1.0
    name: str = "generic"
    meta: dict = field(default_factory=dict)

    def obstacle_gradient(self, x, step: float | None = None):
        """(2, ...) gradient of the obstacle, finite differences if not given."""
        x = np.asarray(x, dtype=float)
        if self.obstacle_grad is not None:
            return np.broadcast_to(np.asarray(self.obstacle_grad(x), dtype=float), x.shape)
        if not callable(self.obstacle):
            return np.zeros_like(x)
        h = step or 1e-7 * max(self.meta.get("length_scale", 1.0), 1e-300)
        ex = np.zeros_like(x)
        ex[0] = h
        ey = np.zeros_like(x)
        ey[1] = h
        g = self.obstacle
        return np.stack([(g(x + ex) - g(x - ex)) / (2 * h), (g(x + ey) - g(x - ey)) / (2 * h)])


# membrane


def build_membrane(G: float = 1.0, f: Field = 0.0, obstacle: Field | None = None,
                   obstacle_grad=None) -> ObstacleProblem:
    """Membrane on the unit square; default obstacle sin(πx) sin(πy) - 1/2."""
    if obstacle is None:
        def obstacle(x):
            return np.sin(np.pi * x[0]) * np.sin(np.pi * x[1]) - 0.5

        def obstacle_grad(x):
            return np.pi * np.stack([np.cos(np.pi * x[0]) * np.sin(np.pi * x[1]),
                                     np.sin(np.pi * x[0]) * np.cos(np.pi * x[1])])
    return ObstacleProblem(G, f, obstacle, obstacle_grad, 0.0, name="membrane",
                           scale=1.0, meta={"length_scale": 1.0})


def membrane_mesh(levels: int = 3) -> meshmod.TriMesh:
    return meshmod.init_square_symmetric(levels)


# torsion


@dataclass(frozen=True)
class TorsionParams:
    """Shear modulus G (GPa), yield stress tau (GPa), twist gamma (deg), length l (mm)."""

    G: float = 79.3
    tau: float = 0.240
    gamma: float = 8.0
    l: float = 400.0

    def __post_init__(self):
        for k in ("G", "tau", "gamma", "l"):
            if not getattr(self, k) > 0:
                raise ValueError(f"torsion parameter {k} must be positive")

    @property
    def theta(self) -> float:
        """Twist per unit length in rad/m."""
        return 2 * np.pi * self.gamma / (180.0 * self.l * 1e-3)


def torsion_sdf(profile: geometry.ProfileIPN80 | None = None) -> geometry.SignedDistanceField:
    """IPN profile field in metres."""
    return geometry.scaled(geometry.sdf_ipn80(profile), 1e-3)


def build_torsion(params: TorsionParams | None = None,
                  sdf: geometry.SignedDistanceField | None = None) -> ObstacleProblem:
    """Obstacle form for ψ = -φ: ``-Δψ >= -2Gθ``, ``ψ >= -τ δ / √3``."""
    params = params or TorsionParams()
    sdf = sdf or torsion_sdf()
    G = params.G * 1e9
    tau = params.tau * 1e9
    theta = params.theta
    c = tau / np.sqrt(3.0)

    def obstacle(x):
        return -c * geometry.distance_to_boundary(sdf, x)

    def obstacle_grad(x):
        d = sdf.eval(x)
        g = sdf.grad(x)
        return np.where(d < 0, c * g, 0.0)

    # characteristic stress-function magnitude: τ/√3 times a web half-thickness
    return ObstacleProblem(1.0, -2 * G * theta, obstacle, obstacle_grad, 0.0,
                           name="torsion", scale=c * 1e-3,
                           meta={"theta": theta, "sdf": sdf, "length_scale": 1e-3,
                                 "params": params})


def torsion_mesh(h0: float = 4e-3, sdf=None, quadratic: bool = True,
                 profile: geometry.ProfileIPN80 | None = None) -> meshmod.TriMesh:
    pr = profile or geometry.ProfileIPN80()
    sdf = sdf or torsion_sdf(pr)
    hb = np.array([pr.b / 2, pr.h / 2]) * 1e-3
    corners = np.array([[hb[0], hb[1]], [-hb[0], hb[1]], [-hb[0], -hb[1]], [hb[0], -hb[1]]])
    m = geometry.distmesh_generate(sdf, h0, [-1.05 * hb, 1.05 * hb], fixed=corners)
    generated = m.info["distmesh"]
    m = meshmod.project_boundary_nodes(m, sdf)
    warnings = m.info.get("projection_warnings", 0)
    if quadratic:
        m = meshmod.lift_quadratic(m, sdf)
    m.info.update(distmesh=generated, projection_warnings=warnings)
    return m


# bearing


@dataclass(frozen=True)
class BearingParams:
    """R, L (mm); c1 (µm); mu (Pa·s); e (-); p_env, p_cav (kPa); V (m/s)."""

    R: float = 25.4
    L: float = 38.1
    c1: float = 114.0
    mu: float = 0.0307
    e: float = 0.4
    p_env: float = 172.0
    p_cav: float = 100.0
    V: float = 5.320

    def __post_init__(self):
        for k in ("R", "L", "c1", "mu", "p_env", "p_cav", "V"):
            if not getattr(self, k) > 0:
                raise ValueError(f"bearing parameter {k} must be positive")
        if not 0 <= self.e < 1:
            raise ValueError("eccentricity must satisfy 0 <= e < 1")
        if not self.p_cav < self.p_env:
            raise ValueError("p_cav must be below p_env")

    def si(self) -> dict:
        return dict(R=self.R * 1e-3, L=self.L * 1e-3, c1=self.c1 * 1e-6, mu=self.mu,
                    e=self.e, p_env=self.p_env * 1e3, p_cav=self.p_cav * 1e3, V=self.V)


def build_bearing(params: BearingParams | None = None) -> ObstacleProblem:
    """Reynolds obstacle problem in the shifted pressure q = p - p_env."""
    params = params or BearingParams()
    s = params.si()
    R, c1, e, mu, V = s["R"], s["c1"], s["e"], s["mu"], s["V"]

    def gap(x):
        return c1 * (1 + e * np.cos(x[0] / R))

    def coefficient(x):
        return gap(x) ** 3 / mu

    def load(x):
        # -6 V d'(x)
        return 6 * V * c1 * e / R * np.sin(x[0] / R)

    shift = s["p_env"]
    return ObstacleProblem(coefficient, load, s["p_cav"] - shift, None, 0.0,
                           periodic=True, period=2 * np.pi * R, name="bearing",
                           scale=shift,
                           meta={"gap": gap, "mu": mu, "shift": shift, "si": s,
                                 "length_scale": R, "params": params})


def unshift(problem: ObstacleProblem, q):
    """Absolute pressure from the shifted unknown."""
    return np.asarray(q) + problem.meta.get("shift", 0.0)


def bearing_mesh(params: BearingParams | None = None, nx: int = 32, ny: int = 8) -> meshmod.TriMesh:
    params = params or BearingParams()
    s = params.si()
    R, L = s["R"], s["L"]
    m = meshmod.init_rectangle(-np.pi * R, np.pi * R, 0.0, L, nx, ny)
    return meshmod.wrap_periodic(m, 0, 2 * np.pi * R)


def enforce_constraints(problem: ObstacleProblem, V: DofBasis):
    """Dirichlet dofs of the primal basis and their values.

    Periodic seams are already identified in the mesh, so no tie constraints
    are produced.
    """
    dofs = V.boundary_dofs()
    if callable(problem.obstacle):
        pts = V.dof_points()[dofs]
        g = evaluate_field(problem.obstacle, pts)
    else:
        g = np.full(len(dofs), float(problem.obstacle))
    tol = 1e-12 * max(abs(problem.scale), 1.0)
    bad = g > problem.dirichlet + tol
    if bad.any():
        raise InfeasibleObstacleError(
            f"obstacle above boundary value at {int(bad.sum())} boundary dofs")
    return dofs, np.full(len(dofs), float(problem.dirichlet))
