import numpy as np
import pytest

from wgfem.cases import CASES, PROBLEMS, get_problem, initial_mesh, run_case, run_meshfile
from wgfem.mesh import build_uniform_rect, write_mesh

STEP = 2.5e-4


def fd(fn, x, d):
    """Fourth-order central difference of ``fn`` along axis ``d`` at points x (2, n)."""
    e = np.zeros((2, 1))
    e[d] = STEP
    return (-fn(x + 2 * e) + 8 * fn(x + e) - 8 * fn(x - e) + fn(x - 2 * e)) / (12 * STEP)


def fd_divergence(flux, x):
    return fd(lambda y: flux(y)[0], x, 0) + fd(lambda y: flux(y)[1], x, 1)


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_load_matches_finite_differences(name):
    p = get_problem(name)
    x = np.random.default_rng(1).uniform(0.05, 0.95, size=(2, 50))

    def flux(y):
        a = p.coefficient(y.T, p.u(y), p.grad_u(y).T)
        return np.einsum("nab,bn->an", a, p.grad_u(y))

    np.testing.assert_allclose(p.f(x), -fd_divergence(flux, x), rtol=1e-8, atol=1e-9)


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_gradient_matches_finite_differences(name):
    p = get_problem(name)
    x = np.random.default_rng(2).uniform(0.05, 0.95, size=(2, 50))
    approx = np.stack([fd(p.u, x, d) for d in range(2)])
    np.testing.assert_allclose(p.grad_u(x), approx, rtol=1e-8, atol=1e-10)


def test_boundary_data():
    x = np.linspace(0, 1, 11)
    side = np.stack([x, np.zeros_like(x)])
    for name in PROBLEMS:
        np.testing.assert_allclose(get_problem(name).g(side), 0.0, atol=1e-15)


def test_unknown_names():
    with pytest.raises(ValueError, match="unknown problem"):
        get_problem("cosine")
    with pytest.raises(ValueError, match="unknown case"):
        run_case("5-spiral")
    with pytest.raises(ValueError, match="three"):
        run_case("1-rect", levels=2)


@pytest.mark.parametrize("case", sorted(CASES))
def test_level_sizes_halve(case):
    _, family, _ = CASES[case]
    hs = [h for _, h in family(3)]
    np.testing.assert_allclose(np.array(hs[:-1]) / hs[1:], 2.0, rtol=1e-14)


def test_shipped_meshes():
    m3, m4 = initial_mesh("case3"), initial_mesh("case4")
    assert m3.is_conforming and m3.area.sum() == pytest.approx(1.0, abs=1e-12)
    assert not m4.is_conforming and len(m4.hanging_vertices()) == 1


def test_short_run_report():
    rep = run_case("1-rect", levels=3)
    assert len(rep.levels) == 3 and rep.certificates_passed
    r_H1, r_L2, r_edge = rep.rates
    assert 0.9 < r_H1 < 1.1 and 1.8 < r_L2 < 2.1 and 1.8 < r_edge < 2.1
    text = rep.summary()
    assert text.splitlines()[0].startswith("case 1-rect")
    assert "rates" in text


def test_meshfile_matches_case_level(tmp_path):
    path = tmp_path / "rect4.wgmesh"
    write_mesh(build_uniform_rect(4), path)
    single = run_meshfile(path, "sine", h=0.25).errors[0]
    level = run_case("1-rect", levels=3).errors[0]
    assert single == level
