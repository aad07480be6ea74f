"""Discrete weak gradient.

For ``v = {v0, vb}`` on a cell ``T`` the weak gradient is the unique
``g in [P_{k-1}(T)]^2`` with

    (g, q)_T = -(v0, div q)_T + <vb, q . n>_{dT}   for all q in [P_{k-1}(T)]^2.

Per cell this is a small SPD solve with the gradient-space mass matrix; the
result is a matrix ``G_T`` taking the cell's local DOF vector (interior
coefficients, then trace coefficients of each edge in loop order) to the
coefficients of ``g``.  The gradient basis is ``(p_i, 0)`` for the scaled
monomials ``p_i`` of degree ``k - 1``, followed by ``(0, p_i)``.
"""
from __future__ import annotations

import numpy as np

from .space import _spd_solve, project_Q0, project_Qb, project_Qbold


def _gradient_mass(gd):
    nr = gd.mass_g.shape[-1]
    N = len(gd)
    M = np.zeros((N, 2 * nr, 2 * nr))
    M[:, :nr, :nr] = gd.mass_g
    M[:, nr:, nr:] = gd.mass_g
    return M


def _rhs_blocks(gd):
    """Right-hand side of the defining identity for every basis q_i, shape (N, 2nr, nloc)."""
    N = len(gd)
    # -(v0, div q)_T ; div (p_i, 0) = dp_i/dx, div (0, p_i) = dp_i/dy
    div = np.concatenate([gd.dphi_g[..., 0], gd.dphi_g[..., 1]], axis=-1)  # (N, Q, 2nr)
    volume = -np.einsum("nq,nqi,nqm->nim", gd.wq, div, gd.phi)
    # <vb, q . n>_e on each loop edge
    qn = np.concatenate([gd.phi_ge * gd.normal[:, :, None, None, 0],
                         gd.phi_ge * gd.normal[:, :, None, None, 1]], axis=-1)  # (N, m, G, 2nr)
    trace = np.einsum("njg,njgi,njgl->nijl", gd.we, qn, gd.psi_e)
    return np.concatenate([volume, trace.reshape(N, trace.shape[1], -1)], axis=-1)


class WeakGradientOperator:
    """Per-cell weak gradient matrices, batched like the space's cell groups.

    ``matrices[i]`` has shape (N_i, n_grad, n_local) for the i-th group.
    Depends only on the geometry and ``k``.
    """

    def __init__(self, space):
        self.space = space
        self.mass = []
        self.matrices = []
        for gd in space.groups():
            M = _gradient_mass(gd)
            self.mass.append(M)
            self.matrices.append(_spd_solve(M, _rhs_blocks(gd), "gradient mass matrix"))

    def cell_matrix(self, c):
        gd, r = self.space.locate(c)
        i = self.space.groups().index(gd)
        return self.matrices[i][r]

    def coefficients(self, v):
        """Weak gradient coefficients of ``v`` for every cell, shape (n_cells, n_grad)."""
        out = np.empty((self.space.mesh.n_cells, self.space.n_grad_basis))
        x = v.coefficients if hasattr(v, "coefficients") else np.asarray(v)
        for gd, G in zip(self.space.groups(), self.matrices):
            out[gd.cells] = np.einsum("nil,nl->ni", G, x[gd.dofs])
        return out

    def at_quadrature(self, v):
        """Weak gradient of ``v`` at each group's volume quadrature points, list of (N, Q, 2)."""
        x = v.coefficients if hasattr(v, "coefficients") else np.asarray(v)
        out = []
        for gd, G in zip(self.space.groups(), self.matrices):
            coef = np.einsum("nil,nl->ni", G, x[gd.dofs])
            out.append(gradient_field(gd.phi_g, coef))
        return out


def gradient_field(phi_g, coef):
    """Evaluate gradient-space coefficients (..., 2nr) against basis values (..., Q, nr)."""
    nr = phi_g.shape[-1]
    gx = np.einsum("...qi,...i->...q", phi_g, coef[..., :nr])
    gy = np.einsum("...qi,...i->...q", phi_g, coef[..., nr:])
    return np.stack([gx, gy], axis=-1)


def weak_gradient_operator(space):
    """Build (once) and return the space's :class:`WeakGradientOperator`."""
    op = getattr(space, "_weak_gradient", None)
    if op is None:
        op = WeakGradientOperator(space)
        space._weak_gradient = op
    return op


def build_weak_gradient(space, cell):
    """Matrix ``G_T`` of one cell, shape (n_grad, n_local)."""
    return weak_gradient_operator(space).cell_matrix(cell)


def local_Qh(space, cell, phi):
    """Local DOF vector of ``Q_h phi`` restricted to ``cell``."""
    edges = space.mesh.cell_edges(cell)
    return np.concatenate([project_Q0(space, cell, phi)] + [project_Qb(space, e, phi) for e in edges])


def verify_commuting_identity(space, cell, phi, grad_phi):
    """L2(T) norm of ``weak_grad(Q_h phi) - Qbold(grad phi)`` on one cell."""
    G = build_weak_gradient(space, cell)
    lhs = G @ local_Qh(space, cell, phi)
    rhs = project_Qbold(space, cell, grad_phi)
    d = lhs - rhs
    gd, r = space.locate(cell)
    M = np.kron(np.eye(2), gd.mass_g[r])
    return float(np.sqrt(max(d @ M @ d, 0.0)))


__all__ = [
    "WeakGradientOperator",
    "build_weak_gradient",
    "gradient_field",
    "local_Qh",
    "verify_commuting_identity",
    "weak_gradient_operator",
]
