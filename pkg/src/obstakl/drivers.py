"""Turn a RunConfig into a problem, an initial mesh and adaptive options, and run it."""
from __future__ import annotations

from dataclasses import dataclass, field

from . import applications as ap, mesh as meshmod
from .adaptivity import AdaptOptions, LevelResult, adapt_loop
from .config import MembraneConfig, RunConfig


@dataclass
class Setup:
    problem: ap.ObstacleProblem
    mesh: meshmod.TriMesh
    options: AdaptOptions
    extra: dict = field(default_factory=dict)


def setup(cfg: RunConfig) -> Setup:
    p = cfg.params
    common = dict(warm_start=cfg.warm_start, uniform=cfg.uniform, tol=cfg.tol,
                  max_iter=cfg.max_iter, smooth_sweeps=cfg.smooth)
    if cfg.driver == "membrane":
        default = p.obstacle == MembraneConfig().obstacle
        problem = ap.build_membrane(p.G, p.f.as_field(), None if default else p.obstacle)
        return Setup(problem, ap.membrane_mesh(p.mesh_level), AdaptOptions(**common))
    if cfg.driver == "torsion":
        sdf = ap.torsion_sdf(p.profile)
        mesh = ap.torsion_mesh(p.h0 * 1e-3, sdf, quadratic=cfg.quadratic, profile=p.profile)
        problem = ap.build_torsion(p.params, sdf)
        opts = AdaptOptions(project_boundary=True, quadratic=cfg.quadratic, sdf=sdf, **common)
        return Setup(problem, mesh, opts, {"sdf": sdf})
    if cfg.driver == "bearing":
        problem = ap.build_bearing(p.params)
        mesh = ap.bearing_mesh(p.params, p.nx, p.ny)
        return Setup(problem, mesh, AdaptOptions(weighted=True, **common))
    problem = ap.ObstacleProblem(p.coefficient.as_field(), p.load.as_field(),
                                 p.obstacle.as_field(), None, p.dirichlet, name="generic",
                                 scale=1.0)
    mesh = meshmod.init_rectangle(p.x0, p.x1, p.y0, p.y1, p.nx, p.ny)
    return Setup(problem, mesh, AdaptOptions(**common))


def run(cfg: RunConfig) -> tuple[Setup, list[LevelResult]]:
    s = setup(cfg)
    return s, adapt_loop(s.problem, s.mesh, cfg.levels, cfg.beta, s.options)
