"""Fixed-point iteration for a solution-dependent diffusion coefficient.

With a(u) = 1 + u^2 / (1 + u^2) each Picard step freezes the coefficient at
the previous iterate and solves one linear system.  The printed increments
are measured in the discrete H1 norm.

    python demos/nonlinear_picard.py
"""
from wgfem.cases import get_problem
from wgfem.mesh import build_uniform_rect
from wgfem.postprocess import error_norms
from wgfem.solver import solve_picard
from wgfem.space import WgSpace

problem = get_problem("nonlinear")
for n in (8, 16, 32):
    space = WgSpace(build_uniform_rect(n), 1, stab_length="edge")
    u, trace = solve_picard(space, problem.coefficient, problem.f, problem.g)
    err = error_norms(space, u, problem.u, problem.grad_u)
    incs = " ".join(f"{t['increment']:.1e}" for t in trace)
    print(f"n={n:3d}  {len(trace):2d} iterations  L2 error {err.e_L2_exact:.3e}")
    print(f"        increments: {incs}")
