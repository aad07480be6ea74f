"""Assembly of the stabilized weak Galerkin system.

Per cell ``T`` the local matrix is ``A_T + S_T`` with

    A_T = G_T^t M_a G_T                                   (stiffness)
    S_T = rho / h * <v0 - vb, w0 - wb>_{dT}                (stabilization)

where ``M_a`` is the gradient-space mass matrix weighted with the diffusion
coefficient and ``h`` the space's stabilization length (h_T by
default).  Boundary trace DOFs carry ``Q_b g`` and are eliminated
symmetrically.  :func:`condense` removes the interior DOFs cell by cell
(Schur complement onto the free trace DOFs).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .space import evaluate, project_Qb_all
from .weak_gradient import gradient_field, weak_gradient_operator


class AssemblyError(ValueError):
    pass


@dataclass
class LocalOperators:
    """Local blocks per cell group; each entry is a stacked array over the group's cells."""

    stiffness: list
    stabilization: list
    load: list


def _jump_operator(space, gd):
    """Map local DOFs to ``v0 - vb`` at every edge quadrature point, shape (N, m, G, nloc)."""
    N, m = len(gd), gd.group.nverts
    nk, ke = space.n_cell_basis, space.n_edge_basis
    G = gd.we.shape[-1]
    D = np.zeros((N, m, G, nk + m * ke))
    D[..., :nk] = gd.phi_e
    for j in range(m):
        D[:, j, :, nk + j * ke:nk + (j + 1) * ke] = -gd.psi_e[:, j]
    return D


def _weighted_gradient_mass(gd, a):
    """``(a q_j, q_i)_T`` for the gradient basis; ``a`` is (N, Q, 2, 2)."""
    N, nr = len(gd), gd.phi_g.shape[-1]
    M = np.einsum("nq,nqab,nqi,nqj->naibj", gd.wq, a, gd.phi_g, gd.phi_g)
    return M.reshape(N, 2 * nr, 2 * nr)


def _coefficient_at(space, gd, G, coefficient, state):
    if coefficient.depends_on_solution:
        x = state.coefficients[gd.dofs]
        nk = space.n_cell_basis
        eta = np.einsum("nqi,ni->nq", gd.phi, x[:, :nk])
        p = gradient_field(gd.phi_g, np.einsum("nil,nl->ni", G, x))
        return coefficient(gd.xq, eta, p)
    return coefficient(gd.xq)


def _group_local(space, gd, G, coefficient, f, rho, state):
    a = _coefficient_at(space, gd, G, coefficient, state)
    Ma = _weighted_gradient_mass(gd, a)
    A = np.einsum("nil,nij,njm->nlm", G, Ma, G)
    D = _jump_operator(space, gd)
    S = rho * np.einsum("njg,nj,njgl,njgm->nlm", gd.we, 1.0 / gd.h_stab, D, D)
    load = np.einsum("nq,nq,nqi->ni", gd.wq, evaluate(f, gd.xq), gd.phi)
    return A, S, load


def local_operators(space, coefficient, f, rho=1.0, state=None, workers=None):
    """Stiffness, stabilization and load blocks for every cell group."""
    if not rho > 0:
        raise AssemblyError("stabilization parameter rho must be positive")
    if coefficient.depends_on_solution and state is None:
        raise AssemblyError("coefficient depends on the solution: a linearization state is required")
    wg = weak_gradient_operator(space)
    jobs = list(zip(space.groups(), wg.matrices))

    def run(job):
        return _group_local(space, job[0], job[1], coefficient, f, rho, state)

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    return LocalOperators([r[0] for r in results], [r[1] for r in results], [r[2] for r in results])


class SparseSystem:
    """Global WG system before and after Dirichlet elimination.

    ``matrix`` and ``rhs`` are the unconstrained (floating) operator and load;
    ``constrained``/``values`` list the boundary trace DOFs and their
    prescribed coefficients.
    """

    def __init__(self, space, matrix, rhs, constrained, values, local=None, rho=1.0):
        self.space = space
        self.matrix = matrix.tocsr()
        self.rhs = rhs
        self.constrained = np.asarray(constrained, dtype=np.int64)
        self.values = np.asarray(values, dtype=float)
        self.local = local
        self.rho = rho
        mask = np.ones(space.ndofs, dtype=bool)
        mask[self.constrained] = False
        self.free = np.flatnonzero(mask)

    @property
    def ndofs(self):
        return self.space.ndofs

    def reduced(self):
        """Symmetrically eliminated system ``(A_ff, b_f - A_fc u_c)`` on the free DOFs."""
        A = self.matrix
        Aff = A[self.free][:, self.free]
        b = self.rhs[self.free] - A[self.free][:, self.constrained] @ self.values
        return Aff.tocsr(), b

    def expand(self, x_free):
        x = np.empty(self.ndofs)
        x[self.free] = x_free
        x[self.constrained] = self.values
        return x

    def residual(self, x):
        """Residual of the free equations for a full coefficient vector."""
        x = getattr(x, "coefficients", x)
        return (self.rhs - self.matrix @ x)[self.free]

    def export_matrix_market(self, path, reduced=True):
        A = self.reduced()[0] if reduced else self.matrix
        scipy.io.mmwrite(str(path), sp.coo_matrix(A), symmetry="symmetric")

    def export_rhs(self, path, reduced=True):
        b = self.reduced()[1] if reduced else self.rhs
        np.savetxt(path, b, fmt="%.17g")


def _scatter(space, blocks):
    rows, cols, vals = [], [], []
    for gd, K in zip(space.groups(), blocks):
        d = gd.dofs
        rows.append(np.repeat(d, d.shape[1], axis=1).ravel())
        cols.append(np.tile(d, (1, d.shape[1])).ravel())
        vals.append(K.ravel())
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    n = space.ndofs
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def assemble(space, coefficient, f, g, rho=1.0, state=None, workers=None):
    """Assemble the stabilized system with Dirichlet data ``Q_b g``.

    Parameters
    ----------
    coefficient : Coefficient
    f, g : callables of points with leading coordinate axis
    rho : float
        Stabilization parameter, must be positive.
    state : WeakFunction, optional
        Linearization state; required when the coefficient depends on the
        solution.
    workers : int, optional
        Thread count for the element loop.  The merge order is fixed, so the
        result does not depend on it.
    """
    local = local_operators(space, coefficient, f, rho, state, workers)
    blocks = [A + S for A, S in zip(local.stiffness, local.stabilization)]
    K = _scatter(space, blocks)
    rhs = np.zeros(space.ndofs)
    nk = space.n_cell_basis
    for gd, load in zip(space.groups(), local.load):
        rhs[gd.dofs[:, :nk]] += load
    bedges = np.flatnonzero(space.mesh.boundary)
    constrained = space.edge_dofs(bedges).ravel()
    values = project_Qb_all(space, g, bedges).ravel() if len(bedges) else np.zeros(0)
    return SparseSystem(space, K, rhs, constrained, values, local, rho)


@dataclass
class CondensedSystem:
    """Schur complement of a :class:`SparseSystem` onto its free trace DOFs."""

    system: SparseSystem
    matrix: sp.csr_matrix
    rhs: np.ndarray
    trace_dofs: np.ndarray
    _interior_inv: sp.csr_matrix
    _interior_rhs: np.ndarray
    _K_IT: sp.csr_matrix

    def back_substitute(self, trace_values):
        """Full coefficient vector from the free trace values."""
        s = self.system
        u_I = self._interior_inv @ (self._interior_rhs - self._K_IT @ trace_values)
        x = np.empty(s.ndofs)
        x[:s.space.n_interior] = u_I
        x[self.trace_dofs] = trace_values
        x[s.constrained] = s.values
        return x


def condense(system, space=None):
    """Eliminate interior DOFs cell by cell."""
    space = system.space if space is None else space
    K = system.matrix
    ni, nk = space.n_interior, space.n_cell_basis
    nc = space.mesh.n_cells
    interior = np.arange(ni)
    trace = system.free[system.free >= ni]
    C = system.constrained

    K_II = K[:ni][:, :ni].tocsr()
    if K_II.nnz > nc * nk * nk:
        raise AssemblyError("interior DOFs couple across cells")
    r, c = np.broadcast_arrays(np.arange(nc)[:, None, None] * nk + np.arange(nk)[None, :, None],
                               np.arange(nc)[:, None, None] * nk + np.arange(nk)[None, None, :])
    blocks = np.asarray(K_II[r.ravel(), c.ravel()]).reshape(nc, nk, nk)
    try:
        np.linalg.cholesky(blocks)
    except np.linalg.LinAlgError:
        bad = next(i for i in range(nc) if np.linalg.eigvalsh(blocks[i]).min() <= 0)
        raise AssemblyError(f"interior block of cell {bad} is singular") from None
    inv = np.linalg.inv(blocks)
    Kinv = _block_diag(inv)

    K_TI = K[trace][:, interior].tocsr()
    K_IT = K_TI.T.tocsr()
    K_TT = K[trace][:, trace].tocsr()
    b_I = system.rhs[:ni] - K[:ni][:, C] @ system.values
    b_T = system.rhs[trace] - K[trace][:, C] @ system.values
    S = (K_TT - K_TI @ Kinv @ K_IT).tocsr()
    S = 0.5 * (S + S.T)
    rhs = b_T - K_TI @ (Kinv @ b_I)
    return CondensedSystem(system, S.tocsr(), rhs, trace, Kinv, b_I, K_IT)


def _block_diag(blocks):
    n, b, _ = blocks.shape
    rows = (np.arange(n)[:, None, None] * b + np.arange(b)[None, :, None]).repeat(b, axis=2)
    cols = (np.arange(n)[:, None, None] * b + np.arange(b)[None, None, :]).repeat(b, axis=1)
    return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(n * b, n * b))


def energy(space, v, rho=1.0, coefficient=None):
    """Per-cell ``(a weak_grad v, weak_grad v)_T`` and ``rho/h ||v0 - vb||_{dT}^2``.

    With the default identity coefficient this is the discrete H1 norm squared,
    split into its two parts; returns two arrays of length n_cells.
    """
    x = getattr(v, "coefficients", v)
    wg = weak_gradient_operator(space)
    grad_part = np.empty(space.mesh.n_cells)
    jump_part = np.empty(space.mesh.n_cells)
    for gd, G, M in zip(space.groups(), wg.matrices, wg.mass):
        xl = x[gd.dofs]
        g = np.einsum("nil,nl->ni", G, xl)
        if coefficient is None:
            grad_part[gd.cells] = np.einsum("ni,nij,nj->n", g, M, g)
        else:
            Ma = _weighted_gradient_mass(gd, coefficient(gd.xq))
            grad_part[gd.cells] = np.einsum("ni,nij,nj->n", g, Ma, g)
        jump = np.einsum("njgl,nl->njg", _jump_operator(space, gd), xl)
        jump_part[gd.cells] = rho * np.einsum("njg,nj,njg->n", gd.we, 1.0 / gd.h_stab, jump**2)
    return grad_part, jump_part
