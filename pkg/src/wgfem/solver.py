"""Linear (Jacobi-preconditioned CG) and fixed-point solvers."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .assembly import assemble, condense, energy
from .space import WeakFunction

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A solve did not reach its tolerance; ``history`` holds the residual or increment trace."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


@dataclass(frozen=True)
class SolveConfig:
    rtol: float = 1e-11
    maxiter: int | None = None
    picard_tol: float = 1e-9
    picard_maxiter: int = 50
    condense: bool = True
    trace_path: str | None = None

    def __post_init__(self):
        if not (self.rtol > 0 and self.picard_tol > 0):
            raise ValueError("tolerances must be positive")
        if (self.maxiter is not None and self.maxiter < 1) or self.picard_maxiter < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class CGInfo:
    iterations: int
    residual: float
    residuals: list


def pcg(A, b, rtol=1e-11, maxiter=None, x0=None, record=False):
    """Jacobi-preconditioned conjugate gradients; returns ``(x, CGInfo)``."""
    n = A.shape[0]
    bnorm = np.linalg.norm(b)
    if n == 0:
        return np.zeros(0), CGInfo(0, 0.0, [])
    if bnorm == 0.0:
        return np.zeros(n), CGInfo(0, 0.0, [0.0])
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("matrix has a non-positive diagonal entry; not SPD")
    M = LinearOperator(A.shape, matvec=lambda r: r / d, dtype=float)
    maxiter = maxiter or 10 * n
    residuals = []
    count = [0]

    def callback(xk):
        count[0] += 1
        if record:
            residuals.append(float(np.linalg.norm(b - A @ xk) / bnorm))

    x, info = cg(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter, M=M, callback=callback)
    rel = float(np.linalg.norm(b - A @ x) / bnorm)
    if info != 0 or rel > 10 * rtol:
        raise SolverError(
            f"CG did not converge in {count[0]} iterations (relative residual {rel:.3e})",
            residuals or [rel],
        )
    return x, CGInfo(count[0], rel, residuals)


def _write_trace(path, residuals):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "residual"])
        for i, r in enumerate(residuals, 1):
            w.writerow([i, f"{r:.6e}"])


def solve_linear(system, config=None, x0=None):
    """Solve a :class:`SparseSystem`; returns a :class:`WeakFunction` with ``.info`` attached.

    With ``config.condense`` the interior DOFs are eliminated first and CG
    runs on the trace skeleton only.
    """
    config = config or SolveConfig()
    record = config.trace_path is not None
    x0v = getattr(x0, "coefficients", x0)
    if config.condense:
        cs = condense(system)
        start = None if x0v is None else x0v[cs.trace_dofs]
        t, info = pcg(cs.matrix, cs.rhs, config.rtol, config.maxiter, start, record)
        x = cs.back_substitute(t)
    else:
        A, b = system.reduced()
        start = None if x0v is None else x0v[system.free]
        xf, info = pcg(A, b, config.rtol, config.maxiter, start, record)
        x = system.expand(xf)
    if record:
        _write_trace(config.trace_path, info.residuals)
    log.debug("CG: %d iterations, relative residual %.3e", info.iterations, info.residual)
    u = WeakFunction(system.space, x)
    u.info = info
    return u


def triple_bar_norm(space, v, rho=1.0):
    """Discrete H1 norm: sqrt(sum_T ||weak_grad v||_T^2 + rho/h_T ||v0 - vb||_{dT}^2)."""
    grad_part, jump_part = energy(space, v, rho)
    return float(np.sqrt(grad_part.sum() + jump_part.sum()))


def solve_picard(space, coefficient, f, g, rho=1.0, config=None, workers=None):
    """Fixed-point iteration ``u <- F(u)`` for a solution-dependent coefficient.

    The first iterate freezes the coefficient at ``(eta, p) = (0, 0)``.  Stops
    once the increment in the discrete H1 norm falls below
    ``config.picard_tol``.  Returns ``(u, trace)`` where ``trace`` lists the
    increments; a solution-independent coefficient takes exactly one solve.
    """
    config = config or SolveConfig()
    state = space.zeros()
    u = solve_linear(assemble(space, coefficient, f, g, rho, state, workers), config)
    if not coefficient.depends_on_solution:
        return u, [{"iteration": 1, "increment": 0.0, "cg_iterations": u.info.iterations}]
    trace = [{"iteration": 1, "increment": triple_bar_norm(space, u, rho),
              "cg_iterations": u.info.iterations}]
    for it in range(2, config.picard_maxiter + 1):
        new = solve_linear(assemble(space, coefficient, f, g, rho, u, workers), config, x0=u)
        inc = triple_bar_norm(space, new - u, rho)
        trace.append({"iteration": it, "increment": inc, "cg_iterations": new.info.iterations})
        log.debug("Picard %d: increment %.3e", it, inc)
        u = new
        if inc <= config.picard_tol:
            return u, trace
    raise SolverError(
        f"Picard iteration did not converge in {config.picard_maxiter} iterations "
        f"(last increment {trace[-1]['increment']:.3e})",
        [t["increment"] for t in trace],
    )


def rayleigh_quotients(A, n_probes=20, seed=0):
    """``x^t A x / x^t x`` for random probes, used as an SPD spot check."""
    rng = np.random.default_rng(seed)
    A = sp.csr_matrix(A)
    X = rng.standard_normal((A.shape[0], n_probes))
    return np.einsum("ij,ij->j", X, A @ X) / np.einsum("ij,ij->j", X, X)
