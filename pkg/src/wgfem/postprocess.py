"""Error norms, numerical flux certificates and convergence rates."""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from .assembly import energy
from .space import evaluate, evaluate_vector, project_Qh
from .weak_gradient import gradient_field, weak_gradient_operator

NORMS = ("e_H1", "e_L2", "e_edge")


@dataclass(frozen=True)
class ErrorTriple:
    """Errors of a discrete solution on one mesh level.

    ``e_H1``, ``e_L2`` and ``e_edge`` measure ``e_h = Q_h u - u_h`` in the
    triple-bar, element L2 and edge L2 norms.  ``e_grad`` is the broken
    gradient error ``||grad u - grad u0||`` and ``e_L2_exact`` is
    ``||u - u0||``; both compare against the exact solution instead of its
    projection.
    """

    h: float
    e_H1: float
    e_L2: float
    e_edge: float
    e_grad: float = float("nan")
    e_L2_exact: float = float("nan")

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v < 0:
                raise ValueError(f"{f.name} must be nonnegative, got {v}")

    @property
    def h_inv(self):
        return 1.0 / self.h


def error_norms(space, u_h, u, grad_u, rho=1.0, h=None):
    """Errors of ``u_h`` against the exact solution ``u`` with gradient ``grad_u``.

    ``h`` defaults to the largest cell diameter.  The triple-bar norm uses
    the same ``rho`` and stabilization length as the scheme.
    """
    e = project_Qh(space, u) - u_h
    grad_part, jump_part = energy(space, e, rho)
    e_H1 = np.sqrt(grad_part.sum() + jump_part.sum())

    nk = space.n_cell_basis
    l2 = l2x = gx = 0.0
    for gd in space.groups():
        c = e.interior[gd.cells]
        l2 += np.einsum("ni,nij,nj->", c, gd.mass, c)
        ch = u_h.interior[gd.cells]
        u0 = np.einsum("nqi,ni->nq", gd.phi, ch[:, :nk])
        du0 = np.einsum("nqid,ni->nqd", gd.dphi, ch[:, :nk])
        l2x += np.sum(gd.wq * (evaluate(u, gd.xq) - u0) ** 2)
        gx += np.sum(gd.wq * ((evaluate_vector(grad_u, gd.xq) - du0) ** 2).sum(-1))

    x, w, psi, mass = space.edge_data()
    t = e.trace
    lengths = space.mesh.edge_length
    edge = np.einsum("e,ei,eij,ej->", lengths, t, mass, t)
    return ErrorTriple(
        h=space.mesh.h if h is None else float(h),
        e_H1=float(e_H1),
        e_L2=float(np.sqrt(max(l2, 0.0))),
        e_edge=float(np.sqrt(max(edge, 0.0))),
        e_grad=float(np.sqrt(gx)),
        e_L2_exact=float(np.sqrt(l2x)),
    )


@dataclass
class FluxReport:
    """Conservation residual per cell and normal-flux jump per interior edge.

    ``*_scaled`` divide by the local flux magnitude so tolerances do not
    depend on the mesh size: per cell, ``int_dT |q_h . n| + |int_T f|``; per
    edge, the mean of that quantity over the boundary length of the two
    neighbours times ``|e|^(1/2)``.
    """

    cell_residual: np.ndarray
    cell_scaled: np.ndarray
    edge_jump: np.ndarray
    edge_scaled: np.ndarray
    interior_edges: np.ndarray

    def __post_init__(self):
        for a in (self.cell_residual, self.edge_jump):
            if np.any(a < 0):
                raise ValueError("residuals must be nonnegative")

    @property
    def max_cell(self):
        return float(self.cell_scaled.max(initial=0.0))

    @property
    def max_edge(self):
        return float(self.edge_scaled.max(initial=0.0))

    def passed(self, tol=1e-8):
        return self.max_cell <= tol and self.max_edge <= tol


def _project_gradient_space(gd, field):
    """L2 projection of a vector field sampled at volume points onto [P_{k-1}]^2."""
    nr = gd.mass_g.shape[-1]
    rhs = np.einsum("nq,nqi,nqd->ndi", gd.wq, gd.phi_g, field)
    coef = np.linalg.solve(gd.mass_g[:, None], rhs[..., None])[..., 0]
    return coef.reshape(len(gd), 2 * nr)


def numerical_flux(space, u_h, coefficient, rho=1.0):
    """Normal numerical flux ``q_h . n`` at the edge points of every cell.

    Returns one (N, m, G) array per cell group, outward normals.
    """
    wg = weak_gradient_operator(space)
    nk = space.n_cell_basis
    out = []
    for gd, G in zip(space.groups(), wg.matrices):
        x = u_h.coefficients[gd.dofs]
        g = gradient_field(gd.phi_g, np.einsum("nil,nl->ni", G, x))
        if coefficient.depends_on_solution:
            eta = np.einsum("nqi,ni->nq", gd.phi, x[:, :nk])
            a = coefficient(gd.xq, eta, g)
        else:
            a = coefficient(gd.xq)
        proj = _project_gradient_space(gd, np.einsum("nqab,nqb->nqa", a, g))
        qe = gradient_field(gd.phi_ge, proj[:, None, :])  # (N, m, G, 2)
        jump = np.einsum("njgi,ni->njg", gd.phi_e, x[:, :nk])
        ke = space.n_edge_basis
        xb = x[:, nk:].reshape(len(gd), -1, ke)
        jump -= np.einsum("njgi,nji->njg", gd.psi_e, xb)
        qn = -np.einsum("njgd,njd->njg", qe, gd.normal) + rho / gd.h_stab[..., None] * jump
        out.append(qn)
    return out


def flux_report(space, u_h, coefficient, f, rho=1.0, eps=1e-300):
    """Mass conservation and flux continuity certificates of ``u_h``."""
    mesh = space.mesh
    nc, ne = mesh.n_cells, mesh.n_edges
    cell_res = np.empty(nc)
    cell_scale = np.empty(nc)
    # one-sided fluxes on each edge in the edge's reference parameter
    side = np.zeros((2, ne, space.quad_order // 2 + 1))
    wts = None
    for gd, qn in zip(space.groups(), numerical_flux(space, u_h, coefficient, rho)):
        out = np.einsum("njg,njg->n", gd.we, qn)
        src = np.einsum("nq,nq->n", gd.wq, evaluate(f, gd.xq))
        cell_res[gd.cells] = np.abs(out - src)
        cell_scale[gd.cells] = np.einsum("njg,njg->n", gd.we, np.abs(qn)) + np.abs(src)
        G = qn.shape[-1]
        # bring points to edge orientation: reversed order for right cells
        left = gd.group.signs > 0
        q = np.where(left[..., None], qn, qn[..., ::-1])
        w = np.where(left[..., None], gd.we, gd.we[..., ::-1])
        k = np.where(left, 0, 1)
        side[k, gd.group.edges, :G] = q
        if wts is None:
            wts = np.zeros((ne, G))
        wts[gd.group.edges] = w
    interior = np.flatnonzero(~mesh.boundary)
    s = side[:, interior, :G]
    jump = np.sqrt(np.einsum("eg,eg->e", wts[interior], (s[0] + s[1]) ** 2))
    perimeter = np.bincount(mesh.edge_cells[:, 0], mesh.edge_length, nc)
    perimeter += np.bincount(mesh.edge_cells[:, 1][mesh.edge_cells[:, 1] >= 0],
                             mesh.edge_length[mesh.edge_cells[:, 1] >= 0], nc)
    density = cell_scale / perimeter
    ec = mesh.edge_cells[interior]
    scale = (density[ec[:, 0]] + density[ec[:, 1]]) * np.sqrt(mesh.edge_length[interior])
    return FluxReport(
        cell_residual=cell_res,
        cell_scaled=cell_res / (cell_scale + eps),
        edge_jump=jump,
        edge_scaled=jump / (scale + eps),
        interior_edges=interior,
    )


def fit_rate(levels, norms=NORMS):
    """Least-squares slope of ``log(error)`` against ``log(h)`` for each norm.

    A norm with any zero error is reported as ``"exact"``.
    """
    levels = list(levels)
    if len(levels) < 3:
        raise ValueError("at least three levels are needed to fit a rate")
    h = np.array([lv.h for lv in levels])
    if np.any(np.diff(h) >= 0):
        raise ValueError("mesh sizes must be strictly decreasing")
    rates = []
    for name in norms:
        e = np.array([getattr(lv, name) for lv in levels])
        if np.any(e == 0):
            rates.append("exact")
            continue
        slope = np.polyfit(np.log(h), np.log(e), 1)[0]
        rates.append(float(slope))
    return tuple(rates)


def _fmt(v):
    return v if isinstance(v, str) else f"{v:.6e}"


def write_table(path, levels, rates=None, extra=False):
    """CSV with columns ``h_inv, e_H1, e_L2, e_edge`` and a trailing rate row.

    With ``extra`` the exact-solution measures ``e_grad`` and ``e_L2_exact``
    are appended as two more columns.
    """
    cols = list(NORMS) + (["e_grad", "e_L2_exact"] if extra else [])
    if rates is None:
        rates = fit_rate(levels, cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h_inv"] + cols)
        for lv in levels:
            w.writerow([f"{lv.h_inv:.6g}"] + [_fmt(getattr(lv, c)) for c in cols])
        w.writerow(["rate"] + [r if isinstance(r, str) else f"{r:.4f}" for r in rates])
