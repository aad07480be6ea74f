import csv

import numpy as np
import pytest
import scipy.linalg as sl
import scipy.sparse as sp

from wgfem.assembly import assemble
from wgfem.cases import get_problem
from wgfem.mesh import build_uniform_rect, build_uniform_tri
from wgfem.postprocess import error_norms
from wgfem.solver import (SolveConfig, SolverError, pcg, rayleigh_quotients, solve_linear,
                          solve_picard, triple_bar_norm)
from wgfem.space import Coefficient, WeakFunction, WgSpace, project_Qh

from conftest import single_cell_mesh
from oracles import brute_norm

ZERO = lambda x: 0.0 * x[0]


def test_diagonal_system_converges_at_once():
    A = sp.diags(np.linspace(1.0, 50.0, 40)).tocsr()
    b = np.arange(40.0) + 1
    x, info = pcg(A, b)
    assert info.iterations <= 2
    np.testing.assert_allclose(A @ x, b, rtol=1e-12)


def test_zero_rhs_gives_zero():
    A = sp.diags([2.0, -1.0, -1.0], [0, -1, 1], shape=(10, 10)).tocsr()
    x, info = pcg(A, np.zeros(10))
    assert info.iterations == 0 and not x.any()


def test_iteration_cap_raises_with_history():
    n = 200
    A = sp.diags([2.0, -1.0, -1.0], [0, -1, 1], shape=(n, n)).tocsr()
    with pytest.raises(SolverError, match="did not converge") as info:
        pcg(A, np.ones(n), maxiter=5, record=True)
    assert len(info.value.history) == 5


def test_nonpositive_diagonal_rejected():
    A = sp.diags([1.0, 0.0, 2.0]).tocsr()
    with pytest.raises(SolverError, match="SPD"):
        pcg(A, np.ones(3))


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(rtol=0.0)
    with pytest.raises(ValueError):
        SolveConfig(picard_maxiter=0)


def test_case1_residual_and_trace(tmp_path):
    p = get_problem("sine")
    V = WgSpace(build_uniform_rect(16), 1, stab_length="edge")
    s = assemble(V, p.coefficient, p.f, p.g)
    path = tmp_path / "cg.csv"
    u = solve_linear(s, SolveConfig(trace_path=str(path)))
    assert u.info.residual <= 1e-11
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iter", "residual"]
    assert len(rows) == u.info.iterations + 1
    assert float(rows[-1][1]) <= 1e-11
    # constrained values are imposed exactly
    np.testing.assert_array_equal(u.coefficients[s.constrained], s.values)


def test_resolve_from_solution_takes_at_most_one_iteration():
    p = get_problem("sine")
    V = WgSpace(build_uniform_tri(8), 1)
    s = assemble(V, p.coefficient, p.f, p.g)
    u = solve_linear(s, SolveConfig(rtol=1e-12))
    again = solve_linear(s, SolveConfig(rtol=1e-10), x0=u)
    assert again.info.iterations <= 1


def test_picard_on_linear_problem_is_one_solve():
    p = get_problem("degenerate")
    V = WgSpace(build_uniform_tri(8), 1)
    u, trace = solve_picard(V, p.coefficient, p.f, p.g)
    assert len(trace) == 1
    ref = solve_linear(assemble(V, p.coefficient, p.f, p.g))
    np.testing.assert_array_equal(u.coefficients, ref.coefficients)


def test_picard_converges_on_nonlinear_problem():
    p = get_problem("nonlinear")
    errs = []
    for n in (4, 8, 16):
        V = WgSpace(build_uniform_rect(n), 1, stab_length="edge")
        cfg = SolveConfig()
        u, trace = solve_picard(V, p.coefficient, p.f, p.g, config=cfg)
        assert len(trace) <= cfg.picard_maxiter
        assert trace[-1]["increment"] <= cfg.picard_tol
        errs.append(error_norms(V, u, p.u, p.grad_u).e_L2_exact)
    # second order in L2 with the solution-dependent coefficient
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_picard_cap_reports_increments():
    p = get_problem("nonlinear")
    V = WgSpace(build_uniform_rect(4), 1)
    with pytest.raises(SolverError, match="Picard") as info:
        solve_picard(V, p.coefficient, p.f, p.g, config=SolveConfig(picard_maxiter=2))
    assert len(info.value.history) == 2


def test_triple_bar_norm_trivial_cases():
    V = WgSpace(build_uniform_rect(3), 1)
    assert triple_bar_norm(V, project_Qh(V, lambda x: 4.0 + 0 * x[0])) <= 1e-12
    sq = WgSpace(single_cell_mesh(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)), 1)
    assert triple_bar_norm(sq, project_Qh(sq, lambda x: x[0])) == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("stab_length", ["diameter", "edge"])
def test_triple_bar_norm_matches_brute_force(stab_length, rng):
    V = WgSpace(build_uniform_rect(4), 1, stab_length=stab_length)
    x = rng.standard_normal(V.ndofs)
    expected = brute_norm(V, x, rho=2.0)
    assert triple_bar_norm(V, WeakFunction(V, x), rho=2.0) == pytest.approx(expected, rel=1e-12)


def _interior_mass(V):
    M = np.zeros((V.n_interior, V.n_interior))
    for gd in V.groups():
        for r, c in enumerate(gd.cells):
            d = V.cell_dofs(c)
            M[np.ix_(d, d)] = gd.mass[r]
    return M


def test_discrete_poincare_surrogate():
    rng = np.random.default_rng(7)
    ratios, sharp = [], []
    for n in (4, 8, 16):
        V = WgSpace(build_uniform_rect(n), 1)
        s = assemble(V, Coefficient.identity(), ZERO, ZERO)
        M = _interior_mass(V)
        worst = 0.0
        for _ in range(100):
            x = np.zeros(V.ndofs)
            x[s.free] = rng.standard_normal(len(s.free))
            v0 = x[:V.n_interior]
            worst = max(worst, np.sqrt(v0 @ M @ v0) / triple_bar_norm(V, WeakFunction(V, x)))
        ratios.append(worst)
        # the supremum over V_h^0, from the trace-condensed generalized eigenproblem
        K = s.matrix.toarray()
        I = np.arange(V.n_interior)
        B = s.free[s.free >= V.n_interior]
        S = K[np.ix_(I, I)] - K[np.ix_(I, B)] @ np.linalg.solve(K[np.ix_(B, B)], K[np.ix_(B, I)])
        sharp.append(1.0 / np.sqrt(sl.eigh(S, M, eigvals_only=True)[0]))
    C = ratios[0]
    assert max(ratios[1:]) <= 1.1 * C
    assert max(sharp[1:]) <= 1.1 * sharp[0]
    # the continuous constant on the unit square is 1 / (pi sqrt 2)
    assert sharp[-1] == pytest.approx(1 / (np.pi * np.sqrt(2)), rel=0.05)


def test_rayleigh_quotients_positive():
    p = get_problem("sine")
    V = WgSpace(build_uniform_tri(6), 2)
    A, _ = assemble(V, p.coefficient, p.f, p.g).reduced()
    assert rayleigh_quotients(A).min() > 0
