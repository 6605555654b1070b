import numpy as np
import pytest
from hypothesis import given, strategies as st

from obstakl import applications as ap, mesh as mm
from obstakl.applications import ObstacleProblem
from obstakl.fem import DofBasis, assemble_mixed, condense, solve_linear
from obstakl.solver import (MixedSolution, NonConvergenceError, active_set, complementarity,
                            fixed_point_residual, galerkin_residual, pdas_solve, pgs_oracle,
                            warm_start)


def bases(m):
    return DofBasis.p2b(m), DofBasis.p0(m)


def test_membrane_converges_with_invariants(membrane, membrane_l3):
    m, sol, rep = membrane_l3
    assert rep.converged and rep.residual_history[-1] < 1e-10
    assert rep.iterations <= 50
    assert len(rep.residual_history) == rep.iterations == len(rep.active_counts)
    V, Q = sol.V, sol.Q
    system = assemble_mixed(membrane, V, Q)
    # complementarity: min(λ, π(u - g)) vanishes per element
    c = complementarity(system, sol)
    assert np.all(np.abs(c) <= 1e-8)
    assert fixed_point_residual(system, sol) <= 1e-8 * max(1.0, np.abs(sol.lam).max())
    assert np.all(sol.lam >= -1e-9 * membrane.scale)
    gap = system.project_p0(sol.u) - system.G / system.areas
    assert np.all((sol.lam <= 1e-8) | (np.abs(gap) <= 1e-8 * membrane.scale))
    free = np.setdiff1d(np.arange(V.n), V.boundary_dofs())
    assert galerkin_residual(system, sol, free) <= 1e-9 * max(1.0, np.abs(system.F).max(),
                                                               np.abs(sol.lam).max())
    assert (sol.lam > 0).any()


def test_membrane_solution_symmetric(membrane_l3):
    m, sol, _ = membrane_l3
    V = sol.V
    pts = V.dof_points()
    for flip in (0, 1):
        q = pts.copy()
        q[:, flip] = 1 - q[:, flip]
        vals, _ = V.evaluate_at(sol.u, q)
        np.testing.assert_allclose(vals, V.evaluate_at(sol.u, pts)[0], atol=1e-9)


def test_unconstrained_limit_matches_poisson(membrane):
    m = mm.init_square_symmetric(2)
    V, Q = bases(m)
    pb = ap.build_membrane(f=1.0, obstacle=-10.0)
    sol, rep = pdas_solve(pb, V, Q)
    assert np.all(sol.lam == 0)
    assert rep.active_counts[1:] == [0] * (rep.iterations - 1)
    system = assemble_mixed(pb, V, Q)
    from obstakl.fem import LinearSystem
    c = condense(LinearSystem(system.A, system.F), V.boundary_dofs(), 0.0)
    u = c.expand(solve_linear(c.system))
    assert np.abs(sol.u - u).max() <= 1e-10 * max(1, np.abs(u).max())


def test_pdas_matches_pgs_oracle(membrane):
    m = mm.init_square_symmetric(2)
    V, Q = bases(m)
    sol, _ = pdas_solve(membrane, V, Q)
    ref = pgs_oracle(membrane, V, Q)
    assert np.abs(sol.u - ref.u).max() <= 1e-7
    assert np.abs(sol.lam - ref.lam).max() <= 1e-7


def test_oracle_unconstrained_matches_linear_solve():
    m = mm.init_square_symmetric(1)
    V, Q = bases(m)
    pb = ObstacleProblem(1.0, 1.0, -10.0)
    ref = pgs_oracle(pb, V, Q)
    system = assemble_mixed(pb, V, Q)
    from obstakl.fem import LinearSystem
    c = condense(LinearSystem(system.A, system.F), V.boundary_dofs(), 0.0)
    np.testing.assert_allclose(ref.u, c.expand(solve_linear(c.system)), atol=1e-9)
    assert np.all(ref.lam == 0)


def test_one_element_kkt_point():
    # single element, all boundary dofs pinned to 0; only the bubble is free
    m = mm.TriMesh.from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    V, Q = bases(m)
    pb = ObstacleProblem(1.0, -1.0, -0.001)
    s = assemble_mixed(pb, V, Q)
    b = V.element_dofs[0, 6]
    a_bb, c_b = s.A[b, b], s.B[0, b]
    # unconstrained bubble coefficient f_b / a_bb violates the mean bound, so
    # the constraint is active: mean(u) = g  =>  u_b = G / c_b, λ = (a_bb u_b - f_b) / c_b
    u_b = s.G[0] / c_b
    lam = (a_bb * u_b - s.F[b]) / c_b
    assert s.F[b] / a_bb * c_b < s.G[0]
    for sol in (pgs_oracle(pb, V, Q), pdas_solve(pb, V, Q)[0]):
        assert sol.u[b] == pytest.approx(u_b, rel=1e-10)
        assert sol.lam[0] == pytest.approx(lam, rel=1e-10)
        assert lam > 0


def test_non_convergence_carries_report(membrane):
    m = mm.init_square_symmetric(3)
    V, Q = bases(m)
    with pytest.raises(NonConvergenceError) as exc:
        pdas_solve(membrane, V, Q, max_iter=2)
    assert exc.value.report.iterations == 2
    assert not exc.value.report.converged
    with pytest.raises(ValueError):
        pdas_solve(membrane, V, Q, tol=0.0)


def test_pdas_deterministic(membrane):
    m = mm.init_square_symmetric(2)
    V, Q = bases(m)
    s1, r1 = pdas_solve(membrane, V, Q)
    s2, r2 = pdas_solve(membrane, V, Q)
    assert r1.residual_history == r2.residual_history
    assert np.array_equal(s1.u, s2.u) and np.array_equal(s1.lam, s2.lam)


def test_active_set_tie_is_inactive():
    m = mm.init_square_symmetric(0)
    V, Q = bases(m)
    s = assemble_mixed(ObstacleProblem(1.0, 0.0, 0.0), V, Q)
    u = np.zeros(V.n)
    assert not active_set(s, u, np.zeros(Q.n)).any()
    assert active_set(s, u, np.full(Q.n, 1e-3)).all()


@given(st.floats(0.1, 50.0))
def test_scaling_coefficient_and_load(c):
    m = mm.init_square_symmetric(2)
    V, Q = bases(m)
    base = ObstacleProblem(1.0, -8.0, lambda x: -0.1 + 0 * x[0])
    scaled = ObstacleProblem(c, -8.0 * c, lambda x: -0.1 + 0 * x[0])
    s1, _ = pdas_solve(base, V, Q)
    s2, _ = pdas_solve(scaled, V, Q)
    assert (s1.lam > 0).any()
    np.testing.assert_allclose(s2.u, s1.u, atol=1e-10)
    np.testing.assert_allclose(s2.lam, c * s1.lam, rtol=1e-8, atol=1e-8 * c)


def test_warm_start_identity_transfer(membrane_l3):
    m, sol, _ = membrane_l3
    V, Q = bases(m)
    w = warm_start(sol, V, Q, parent=np.arange(m.ntriangles))
    nb = V.n - m.ntriangles
    np.testing.assert_allclose(w.u[:nb], sol.u[:nb], atol=1e-12)
    np.testing.assert_allclose(w.lam, np.maximum(sol.lam, 0))


def test_warm_start_nested_uniform(membrane_l3):
    m, sol, _ = membrane_l3
    fine, parent = mm.rgb_refine(m, np.arange(m.ntriangles))
    V, Q = bases(fine)
    w = warm_start(sol, V, Q, parent)
    assert w.info["outside"] == 0
    # at new vertices the transferred field equals the old one
    old, _ = sol.V.evaluate_at(sol.u, fine.vertices)
    new, _ = V.evaluate_at(w.u, fine.vertices)
    np.testing.assert_allclose(new, old, atol=1e-12)


def test_warm_start_never_more_iterations(membrane_l3, membrane):
    m, sol, _ = membrane_l3
    from obstakl.adaptivity import compute_indicators, mark_maximum
    marked = mark_maximum(compute_indicators(sol, membrane), 0.5)
    fine, parent = mm.rgb_refine(m, marked)
    V, Q = bases(fine)
    _, warm = pdas_solve(membrane, V, Q, warm_start(sol, V, Q, parent))
    _, cold = pdas_solve(membrane, V, Q)
    assert warm.iterations <= cold.iterations


def test_warm_start_outside_points_counted(membrane_l3):
    m, sol, _ = membrane_l3
    big = m.with_vertices(1.2 * m.vertices - 0.1)
    big = mm.TriMesh.from_arrays(big.vertices, big.triangles)
    V, Q = bases(big)
    w = warm_start(sol, V, Q)
    assert w.info["outside"] > 0
    assert isinstance(w, MixedSolution)
