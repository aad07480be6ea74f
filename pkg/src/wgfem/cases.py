"""Manufactured problems and the convergence experiments built on them."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .mesh import (build_uniform_rect, build_uniform_tri, read_mesh, refine_barycentric,
                   regularity_report, segment_hanging_edges)
from .postprocess import NORMS, ErrorTriple, error_norms, fit_rate, flux_report
from .solver import SolveConfig, solve_picard
from .space import Coefficient, WgSpace

log = logging.getLogger(__name__)

PI = np.pi


@dataclass(frozen=True)
class Problem:
    """Exact solution ``u`` with gradient, load ``f`` and diffusion coefficient."""

    name: str
    u: object
    grad_u: object
    f: object
    coefficient: Coefficient

    @property
    def g(self):
        return self.u


def _sine():
    def u(x):
        return np.sin(PI * x[0]) * np.sin(PI * x[1])

    def grad_u(x):
        return PI * np.stack([np.cos(PI * x[0]) * np.sin(PI * x[1]),
                              np.sin(PI * x[0]) * np.cos(PI * x[1])])

    def f(x):
        return 2 * PI**2 * u(x)

    return Problem("sine", u, grad_u, f, Coefficient.identity())


def _degenerate():
    def u(x):
        return x[0] * (1 - x[0]) * x[1] * (1 - x[1])

    def grad_u(x):
        return np.stack([(1 - 2 * x[0]) * x[1] * (1 - x[1]),
                         (1 - 2 * x[1]) * x[0] * (1 - x[0])])

    def f(x):
        # -div(xy grad u), expanded by hand
        X, Y = x[0], x[1]
        return -((1 - 4 * X) * Y**2 * (1 - Y) + (1 - 4 * Y) * X**2 * (1 - X))

    a = Coefficient.scalar(lambda x: x[0] * x[1], lower=0.0)
    return Problem("degenerate", u, grad_u, f, a)


def _nonlinear():
    # a(u) = 1 + u^2 / (1 + u^2) with the sine solution; f = -a(u) lap u - a'(u) |grad u|^2
    sine = _sine()

    def a_of(eta):
        return 1.0 + eta**2 / (1.0 + eta**2)

    def f(x):
        uu = sine.u(x)
        g = sine.grad_u(x)
        da = 2 * uu / (1 + uu**2) ** 2
        return a_of(uu) * 2 * PI**2 * uu - da * (g[0] ** 2 + g[1] ** 2)

    coef = Coefficient(lambda x, eta, p: a_of(eta), depends_on_solution=True,
                       lower=1.0, upper=2.0)
    return Problem("nonlinear", sine.u, sine.grad_u, f, coef)


PROBLEMS = {"sine": _sine, "degenerate": _degenerate, "nonlinear": _nonlinear}


def get_problem(name):
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


def initial_mesh(name):
    """One of the shipped initial meshes, ``"case3"`` or ``"case4"``."""
    path = resources.files("wgfem") / "data" / f"{name}_initial.wgmesh"
    with resources.as_file(path) as p:
        return read_mesh(p)


def _uniform(builder, n0):
    def levels(count):
        for i in range(count):
            n = n0 * 2**i
            yield builder(n), 1.0 / n
    return levels


def _refined(name):
    def levels(count):
        # nominal size: the initial diameter halved per refinement
        geo = initial_mesh(name)
        h0 = geo.h
        for i in range(count):
            if i:
                geo = refine_barycentric(geo)
            mesh = segment_hanging_edges(geo) if not geo.is_conforming else geo
            yield mesh, h0 / 2**i
    return levels


# case id -> (problem, mesh family, default level count)
CASES = {
    "1-rect": ("sine", _uniform(build_uniform_rect, 4), 6),
    "1-tri": ("sine", _uniform(build_uniform_tri, 4), 6),
    "2-degenerate": ("degenerate", _uniform(build_uniform_tri, 8), 5),
    "3-deformed": ("sine", _refined("case3"), 6),
    "4-hanging": ("sine", _refined("case4"), 6),
}


@dataclass
class LevelResult:
    errors: ErrorTriple
    regularity: object
    flux_cell: float
    flux_edge: float
    cg_iterations: int
    picard_iterations: int
    n_cells: int
    ndofs: int
    seconds: float


@dataclass
class ExperimentReport:
    """Per-level errors, fitted rates and certificates of one experiment."""

    case: str
    k: int
    rho: float
    levels: list = field(default_factory=list)
    rates: tuple | None = None
    flux_tol: float = 1e-8

    @property
    def errors(self):
        return [lv.errors for lv in self.levels]

    @property
    def certificates_passed(self):
        return all(lv.flux_cell <= self.flux_tol and lv.flux_edge <= self.flux_tol
                   for lv in self.levels)

    def fit(self, norms=NORMS):
        return fit_rate(self.errors, norms)

    def summary(self):
        lines = [f"case {self.case}  k={self.k}  rho={self.rho}"]
        lines.append(f"{'h_inv':>10} {'e_H1':>11} {'e_L2':>11} {'e_edge':>11} "
                     f"{'flux_cell':>9} {'flux_edge':>9} {'cg':>5} {'sec':>6}")
        for lv in self.levels:
            e = lv.errors
            lines.append(f"{e.h_inv:10.4g} {e.e_H1:11.4e} {e.e_L2:11.4e} {e.e_edge:11.4e} "
                         f"{lv.flux_cell:9.1e} {lv.flux_edge:9.1e} {lv.cg_iterations:5d} "
                         f"{lv.seconds:6.2f}")
        if self.rates is not None:
            lines.append("rates " + "  ".join(r if isinstance(r, str) else f"{r:.4f}"
                                              for r in self.rates))
        return "\n".join(lines)


def solve_level(mesh, problem, k=1, rho=1.0, config=None, stab_length="edge", h=None,
                workers=None, flux_tol=1e-8):
    """Solve one manufactured problem on one mesh and run all diagnostics."""
    t0 = time.perf_counter()
    space = WgSpace(mesh, k, stab_length=stab_length)
    u_h, trace = solve_picard(space, problem.coefficient, problem.f, problem.g, rho, config,
                              workers)
    errors = error_norms(space, u_h, problem.u, problem.grad_u, rho, h=h)
    flux = flux_report(space, u_h, problem.coefficient, problem.f, rho)
    return LevelResult(
        errors=errors,
        regularity=regularity_report(mesh),
        flux_cell=flux.max_cell,
        flux_edge=flux.max_edge,
        cg_iterations=sum(t["cg_iterations"] for t in trace),
        picard_iterations=len(trace),
        n_cells=mesh.n_cells,
        ndofs=space.ndofs,
        seconds=time.perf_counter() - t0,
    )


def run_case(case, levels=None, k=1, rho=1.0, config=None, stab_length="edge",
             workers=None, problem=None):
    """Run one of the experiments in :data:`CASES` over ``levels`` mesh levels."""
    if case not in CASES:
        raise ValueError(f"unknown case {case!r}; choose from {sorted(CASES)}")
    pname, family, default = CASES[case]
    levels = default if levels is None else int(levels)
    if levels < 3:
        raise ValueError("at least three levels are needed")
    if k < 1:
        raise ValueError("degree k must be >= 1")
    config = config or SolveConfig()
    prob = get_problem(problem or pname)
    report = ExperimentReport(case, k, rho)
    for mesh, h in family(levels):
        lv = solve_level(mesh, prob, k, rho, config, stab_length, h, workers)
        log.info("%s: %d cells, h=%.4g, e_H1=%.4e (%.2fs)", case, mesh.n_cells, h,
                 lv.errors.e_H1, lv.seconds)
        report.levels.append(lv)
    report.rates = report.fit()
    return report


def run_meshfile(path, problem="sine", k=1, rho=1.0, config=None, stab_length="edge", h=None):
    """Single-level experiment on a mesh file; hanging vertices are segmented first."""
    mesh = read_mesh(path)
    if not mesh.is_conforming:
        mesh = segment_hanging_edges(mesh)
    report = ExperimentReport(str(path), k, rho)
    report.levels.append(solve_level(mesh, get_problem(problem), k, rho, config,
                                     stab_length, h))
    return report
