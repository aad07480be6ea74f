"""Weak Galerkin space: DOF layout, scaled monomial bases and L2 projections.

A weak function on a cell ``T`` is a pair ``{v0, vb}`` with ``v0 in P_k(T)``
and ``vb in P_k(e)`` on every edge ``e`` of ``T``.  Interior coefficients are
owned by one cell; trace coefficients are owned by an edge and shared by the
cells on both sides.

Global DOF numbering: all interior DOFs first (cell-major), then all edge
DOFs (edge-major).

Cell basis: ``((x - x_T)/h_T)**i * ((y - y_T)/h_T)**j`` in graded
lexicographic order, ``x_T`` the centroid and ``h_T`` the diameter.
Edge basis: ``s**l`` where ``s`` in [-1/2, 1/2] is the arclength fraction
measured from the midpoint along the edge's stored orientation.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .quadrature import edge_points, fan_rule


def dim_pk(k):
    return (k + 1) * (k + 2) // 2


def monomial_exponents(k):
    """Graded-lex exponents: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ..."""
    return [(d - j, j) for d in range(k + 1) for j in range(d + 1)]


def scaled_monomials(x, center, h, k, grad=False):
    """Evaluate the scaled monomial basis of degree ``k``.

    ``x`` has shape (..., 2); ``center`` and ``h`` broadcast against
    ``x[..., 0]``.  Returns values (..., nk) and, with ``grad``, gradients
    (..., nk, 2).
    """
    xi = (x[..., 0] - center[..., 0]) / h
    eta = (x[..., 1] - center[..., 1]) / h
    exps = monomial_exponents(k)
    # powers up to k, shape (k+1, ...)
    px = np.stack([xi**p for p in range(k + 1)])
    py = np.stack([eta**p for p in range(k + 1)])
    vals = np.stack([px[i] * py[j] for i, j in exps], axis=-1)
    if not grad:
        return vals
    hb = np.broadcast_to(h, xi.shape)
    gx = np.stack([(i * px[i - 1] * py[j] / hb) if i else np.zeros_like(xi) for i, j in exps], axis=-1)
    gy = np.stack([(j * px[i] * py[j - 1] / hb) if j else np.zeros_like(xi) for i, j in exps], axis=-1)
    return vals, np.stack([gx, gy], axis=-1)


def edge_monomials(s, k):
    return np.stack([s**l for l in range(k + 1)], axis=-1)


def _spd_solve(M, B, what="mass matrix"):
    """Solve batched SPD systems through a Cholesky factorization."""
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError(f"singular or indefinite local {what}") from None
    y = np.linalg.solve(L, B)
    return np.linalg.solve(np.swapaxes(L, -1, -2), y)


def _as_points_last(values):
    """Normalize a field's output (2, ...) or tuple of two arrays to (..., 2)."""
    if isinstance(values, (tuple, list)):
        values = np.stack(np.broadcast_arrays(*values))
    return np.moveaxis(np.asarray(values, dtype=float), 0, -1)


def evaluate(f, x):
    """Call a scalar field ``f(x)`` (``x`` with leading coordinate axis) on points (..., 2)."""
    xt = np.moveaxis(x, -1, 0)
    return np.broadcast_to(np.asarray(f(xt), dtype=float), x.shape[:-1])


def evaluate_vector(w, x):
    xt = np.moveaxis(x, -1, 0)
    return np.broadcast_to(_as_points_last(w(xt)), x.shape)


@dataclass(frozen=True)
class Coefficient:
    """Diffusion coefficient ``a(x, eta, p)``.

    ``func`` receives points ``x`` (2, ...), ``eta`` (...) and ``p`` (2, ...)
    and returns either a scalar field (...) meaning ``a * I`` or a matrix
    field (2, 2, ...).
    """

    func: Callable
    depends_on_solution: bool = False
    lower: float = 0.0
    upper: float = np.inf

    @classmethod
    def identity(cls):
        return cls(lambda x, eta, p: np.ones(np.shape(eta)), False, 1.0, 1.0)

    @classmethod
    def scalar(cls, fn, **kwargs):
        """Wrap ``fn(x)`` as a solution-independent isotropic coefficient."""
        return cls(lambda x, eta, p: fn(x), False, **kwargs)

    def __call__(self, x, eta=None, p=None):
        """Evaluate at points (..., 2); returns matrices (..., 2, 2)."""
        shape = x.shape[:-1]
        eta = np.zeros(shape) if eta is None else np.broadcast_to(eta, shape)
        p = np.zeros(x.shape) if p is None else np.broadcast_to(p, x.shape)
        out = np.asarray(self.func(np.moveaxis(x, -1, 0), eta, np.moveaxis(p, -1, 0)), dtype=float)
        if out.shape[:2] == (2, 2) and out.ndim == len(shape) + 2:
            return np.moveaxis(out, (0, 1), (-2, -1))
        out = np.broadcast_to(out, shape)
        return out[..., None, None] * np.eye(2)

    def check_ellipticity(self, x, eta=None, p=None, tol=1e-12):
        """Spot-check symmetry and the lower eigenvalue bound at sample points."""
        a = self(x, eta, p)
        if not np.allclose(a, np.swapaxes(a, -1, -2), atol=tol):
            return False
        return bool(np.linalg.eigvalsh(a).min() >= self.lower - tol)


class GroupData:
    """Quadrature points and basis tables for one batch of same-size cells."""

    def __init__(self, space, group):
        k, order = space.k, space.quad_order
        self.group = group
        N, m = len(group), group.nverts
        nk, ke = space.n_cell_basis, space.n_edge_basis
        self.dofs = np.empty((N, nk + m * ke), dtype=np.int64)
        self.dofs[:, :nk] = group.cells[:, None] * nk + np.arange(nk)
        self.dofs[:, nk:] = (space.n_interior + group.edges[:, :, None] * ke
                             + np.arange(ke)).reshape(N, m * ke)
        center = group.centroid[:, None, :]
        h = group.h[:, None]
        self.xq, self.wq = fan_rule(group.points, group.centroid, order)
        self.phi, self.dphi = scaled_monomials(self.xq, center, h, k, grad=True)
        self.phi_g, self.dphi_g = scaled_monomials(self.xq, center, h, k - 1, grad=True)
        a = group.points
        b = np.roll(group.points, -1, axis=1)
        self.xe, self.we, s = edge_points(a, b, order)
        t = b - a
        self.normal = np.stack([t[..., 1], -t[..., 0]], axis=-1) / np.hypot(t[..., 0], t[..., 1])[..., None]
        self.phi_e = scaled_monomials(self.xe, group.centroid[:, None, None, :], group.h[:, None, None], k)
        s_global = group.signs[:, :, None] * s[None, None, :]
        self.psi_e = edge_monomials(s_global, k)
        self.phi_ge = scaled_monomials(self.xe, group.centroid[:, None, None, :],
                                       group.h[:, None, None], k - 1)
        self.mass = np.einsum("nq,nqi,nqj->nij", self.wq, self.phi, self.phi)
        self.mass_g = np.einsum("nq,nqi,nqj->nij", self.wq, self.phi_g, self.phi_g)
        # length scale of the stabilization term on each (cell, edge) pair
        if space.stab_length == "diameter":
            self.h_stab = np.repeat(group.h[:, None], m, axis=1)
        else:
            self.h_stab = np.hypot(t[..., 0], t[..., 1])

    @property
    def cells(self):
        return self.group.cells

    def __len__(self):
        return len(self.group)


class WgSpace:
    """The space V_h of degree ``k`` on a conforming polygonal mesh.

    ``stab_length`` picks the length ``h`` in the ``rho / h`` stabilization
    weight: ``"diameter"`` uses the cell diameter h_T, ``"edge"`` the length
    of the edge carrying the boundary term.
    """

    STAB_LENGTHS = ("diameter", "edge")

    def __init__(self, mesh, k=1, quad_order=None, stab_length="diameter"):
        if k < 1:
            raise ValueError("degree k must be >= 1")
        if stab_length not in self.STAB_LENGTHS:
            raise ValueError(f"stab_length must be one of {self.STAB_LENGTHS}")
        self.stab_length = stab_length
        if mesh.hanging_vertices():
            raise ValueError("mesh has hanging vertices; apply segment_hanging_edges first")
        self.mesh = mesh
        self.k = k
        self.quad_order = 2 * k + 2 if quad_order is None else quad_order
        self.n_cell_basis = dim_pk(k)
        self.n_edge_basis = k + 1
        self.n_grad_basis = 2 * dim_pk(k - 1)
        self.n_interior = mesh.n_cells * self.n_cell_basis
        self.n_trace = mesh.n_edges * self.n_edge_basis
        self.ndofs = self.n_interior + self.n_trace
        self._groups = None
        self._edge_data = None

    def groups(self):
        """Per-batch element data, built on first use."""
        if self._groups is None:
            self._groups = [GroupData(self, g) for g in self.mesh.groups()]
            self._where = np.empty((self.mesh.n_cells, 2), dtype=np.int64)
            for i, gd in enumerate(self._groups):
                self._where[gd.cells, 0] = i
                self._where[gd.cells, 1] = np.arange(len(gd))
        return self._groups

    def cell_dofs(self, c):
        return c * self.n_cell_basis + np.arange(self.n_cell_basis)

    def edge_dofs(self, e):
        e = np.asarray(e)
        return self.n_interior + e[..., None] * self.n_edge_basis + np.arange(self.n_edge_basis)

    def local_dofs(self, c):
        """Interior DOFs of cell ``c`` followed by the trace DOFs of its edges in loop order."""
        return np.concatenate([self.cell_dofs(c), self.edge_dofs(self.mesh.cell_edges(c)).ravel()])

    @property
    def boundary_dofs(self):
        return self.edge_dofs(np.flatnonzero(self.mesh.boundary)).ravel()

    def locate(self, c):
        """Return ``(group_data, row)`` holding cell ``c``."""
        groups = self.groups()
        i, r = self._where[c]
        return groups[i], int(r)

    def edge_data(self):
        """Quadrature points (ne, G, 2), weights (ne, G) and basis (ne, G, k+1) on every edge."""
        if self._edge_data is None:
            ev = self.mesh.edge_vertices
            x, w, s = edge_points(self.mesh.vertices[ev[:, 0]], self.mesh.vertices[ev[:, 1]],
                                  self.quad_order)
            psi = edge_monomials(s, self.k)
            mass = np.einsum("eg,gi,gj->eij", w, psi, psi)
            self._edge_data = (x, w, psi, mass)
        return self._edge_data

    def eval_basis(self, c, points, grad=False):
        """Cell basis of cell ``c`` (values, optionally gradients) at ``points`` (..., 2)."""
        m = self.mesh
        return scaled_monomials(np.asarray(points, dtype=float), m.centroid[c], m.diameter[c],
                                self.k, grad=grad)

    def eval_edge_basis(self, e, s):
        return edge_monomials(np.asarray(s, dtype=float), self.k)

    def zeros(self):
        return WeakFunction(self, np.zeros(self.ndofs))

    def __repr__(self):
        return f"WgSpace(k={self.k}, ndofs={self.ndofs}, mesh={self.mesh!r})"


class WeakFunction:
    """Coefficient vector over a :class:`WgSpace` representing ``{v0, vb}``."""

    def __init__(self, space, coefficients):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (space.ndofs,):
            raise ValueError(f"expected {space.ndofs} coefficients, got {coefficients.shape}")
        self.space = space
        self.coefficients = coefficients

    @property
    def interior(self):
        """Interior coefficients, shape (n_cells, n_cell_basis)."""
        s = self.space
        return self.coefficients[:s.n_interior].reshape(-1, s.n_cell_basis)

    @property
    def trace(self):
        """Trace coefficients, shape (n_edges, k + 1)."""
        s = self.space
        return self.coefficients[s.n_interior:].reshape(-1, s.n_edge_basis)

    def eval_cell(self, c, points):
        """Value of ``v0`` on cell ``c`` at ``points`` (..., 2)."""
        return self.space.eval_basis(c, points) @ self.interior[c]

    def eval_edge(self, e, s):
        """Value of ``vb`` on edge ``e`` at parameters ``s`` in [-1/2, 1/2]."""
        return self.space.eval_edge_basis(e, s) @ self.trace[e]

    def __add__(self, other):
        return WeakFunction(self.space, self.coefficients + other.coefficients)

    def __sub__(self, other):
        return WeakFunction(self.space, self.coefficients - other.coefficients)

    def __mul__(self, alpha):
        return WeakFunction(self.space, alpha * self.coefficients)

    __rmul__ = __mul__

    def to_csv(self, path):
        """Columns: dof_id, kind, owner, local, value."""
        s = self.space
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dof_id", "kind", "owner", "local", "value"])
            for i, v in enumerate(self.coefficients):
                if i < s.n_interior:
                    owner, local = divmod(i, s.n_cell_basis)
                    kind = "cell"
                else:
                    owner, local = divmod(i - s.n_interior, s.n_edge_basis)
                    kind = "edge"
                w.writerow([i, kind, owner, local, repr(float(v))])


def read_weak_function_csv(space, path):
    values = np.zeros(space.ndofs)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            values[int(row["dof_id"])] = float(row["value"])
    return WeakFunction(space, values)


# ----------------------------------------------------------------------
# projections

def _project_group_cells(gd, f):
    fq = evaluate(f, gd.xq)
    rhs = np.einsum("nq,nq,nqi->ni", gd.wq, fq, gd.phi)
    return _spd_solve(gd.mass, rhs[..., None])[..., 0]


def project_Q0(space, cell, f):
    """L2 projection of ``f`` onto P_k(cell); returns basis coefficients."""
    gd, r = space.locate(cell)
    fq = evaluate(f, gd.xq[r])
    rhs = (gd.wq[r] * fq) @ gd.phi[r]
    return _spd_solve(gd.mass[r], rhs[:, None])[:, 0]


def project_Qb(space, edge, g):
    """L2 projection of ``g`` onto P_k(edge)."""
    x, w, psi, mass = space.edge_data()
    rhs = (w[edge] * evaluate(g, x[edge])) @ psi
    return _spd_solve(mass[edge], rhs[:, None], "edge mass matrix")[:, 0]


def project_Qb_all(space, g, edges=None):
    x, w, psi, mass = space.edge_data()
    if edges is not None:
        x, w, mass = x[edges], w[edges], mass[edges]
    rhs = np.einsum("eg,eg,gi->ei", w, evaluate(g, x), psi)
    return _spd_solve(mass, rhs[..., None], "edge mass matrix")[..., 0]


def project_Qbold(space, cell, w):
    """Componentwise L2 projection of a vector field onto [P_{k-1}(cell)]^2.

    Returns the coefficients in the gradient-space ordering: x-component
    coefficients first, then y-component.
    """
    gd, r = space.locate(cell)
    wq = evaluate_vector(w, gd.xq[r])
    rhs = np.einsum("q,qc,qi->ci", gd.wq[r], wq, gd.phi_g[r])
    coef = _spd_solve(gd.mass_g[r], rhs.T, "gradient mass matrix")
    return coef.T.ravel()


def project_Qh(space, phi):
    """``Q_h phi = {Q0 phi, Qb phi}`` on every cell and edge."""
    out = np.empty(space.ndofs)
    nk = space.n_cell_basis
    for gd in space.groups():
        coef = _project_group_cells(gd, phi)
        idx = gd.cells[:, None] * nk + np.arange(nk)
        out[idx] = coef
    out[space.n_interior:] = project_Qb_all(space, phi).ravel()
    return WeakFunction(space, out)
