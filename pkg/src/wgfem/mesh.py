"""Two-dimensional polygonal meshes.

A :class:`PolygonalMesh` is built from a vertex array and a list of
counter-clockwise vertex loops.  Edges, adjacency and all geometric
quantities are derived on construction and never stored in files.

Meshes with hanging nodes (a vertex sitting in the interior of a
neighbouring cell's edge) are representable; :func:`segment_hanging_edges`
inserts such vertices into the loops of the coarse cells so that every edge
is shared identically by its one or two cells.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HANGING_TOL = 1e-10


class MeshError(ValueError):
    """Invalid mesh topology or geometry."""


class MeshFormatError(MeshError):
    """Malformed mesh file."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


@dataclass(frozen=True)
class RegularityReport:
    """Shape-regularity diagnostics (minima over the mesh).

    rho_v : min |T| / h_T**2
    rho_e : min |e| / h_e   (identically 1 for straight edges)
    kappa : min h_e / h_T over all (cell, edge) incidences
    """

    rho_v: float
    rho_e: float
    kappa: float


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _shoelace(p):
    """Signed area of polygons stacked as (..., m, 2)."""
    x, y = p[..., 0], p[..., 1]
    xn, yn = np.roll(x, -1, axis=-1), np.roll(y, -1, axis=-1)
    return 0.5 * np.sum(x * yn - xn * y, axis=-1)


def _centroid(p):
    x, y = p[..., 0], p[..., 1]
    xn, yn = np.roll(x, -1, axis=-1), np.roll(y, -1, axis=-1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum(axis=-1)
    cx = ((x + xn) * cross).sum(axis=-1) / (6.0 * area)
    cy = ((y + yn) * cross).sum(axis=-1) / (6.0 * area)
    return np.stack([cx, cy], axis=-1)


def _diameter(p):
    d = p[..., :, None, :] - p[..., None, :, :]
    return np.sqrt((d**2).sum(axis=-1)).max(axis=(-1, -2))


class CellGroup:
    """All cells of a mesh that have the same number of vertices.

    Batched kernels operate on one group at a time.
    """

    def __init__(self, mesh, nverts, cell_ids):
        self.nverts = nverts
        self.cells = _readonly(cell_ids)
        self.loops = _readonly(np.array([mesh.cells[c] for c in cell_ids], dtype=np.int64))
        self.points = _readonly(mesh.vertices[self.loops])
        self.edges = _readonly(mesh.cell_edges_array(cell_ids, nverts))
        self.signs = _readonly(mesh.cell_signs_array(cell_ids, nverts))
        self.area = mesh.area[cell_ids]
        self.centroid = mesh.centroid[cell_ids]
        self.h = mesh.diameter[cell_ids]

    def __len__(self):
        return len(self.cells)


class PolygonalMesh:
    """Immutable polygonal mesh of a planar domain.

    Parameters
    ----------
    vertices : (nv, 2) array_like
    cells : sequence of integer sequences
        Counter-clockwise vertex loops, 0-based.
    validate : bool
        Run the geometric checks (orientation, simplicity, non-degeneracy).

    Attributes
    ----------
    edge_vertices : (ne, 2) int array
        Edge endpoints in the order traversed by the left cell.
    edge_cells : (ne, 2) int array
        Left and right cell; right is -1 on single-sided edges.
    edge_normal : (ne, 2) array
        Unit normal pointing out of the left cell.
    """

    def __init__(self, vertices, cells, validate=True):
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (nv, 2)")
        if len(cells) == 0:
            raise MeshError("mesh has no cells")
        nv = len(vertices)
        loops = []
        for c, loop in enumerate(cells):
            loop = np.asarray(loop, dtype=np.int64)
            if loop.ndim != 1 or len(loop) < 3:
                raise MeshError(f"cell {c} has fewer than 3 vertices")
            if loop.min() < 0 or loop.max() >= nv:
                raise MeshError(f"cell {c} references a missing vertex")
            if len(np.unique(loop)) != len(loop):
                raise MeshError(f"cell {c} repeats a vertex")
            loops.append(_readonly(loop))
        self.vertices = _readonly(vertices)
        self.cells = tuple(loops)
        self._groups = None
        self._build_geometry(validate)
        self._build_edges()

    # construction -----------------------------------------------------
    def _by_size(self):
        sizes = np.array([len(c) for c in self.cells])
        return {int(m): np.flatnonzero(sizes == m) for m in np.unique(sizes)}

    def _build_geometry(self, validate):
        nc = len(self.cells)
        area = np.empty(nc)
        centroid = np.empty((nc, 2))
        diameter = np.empty(nc)
        for m, ids in self._by_size().items():
            p = self.vertices[np.array([self.cells[c] for c in ids])]
            area[ids] = _shoelace(p)
            bad = np.flatnonzero(area[ids] <= 0.0)
            if validate and len(bad):
                raise MeshError(
                    f"cell {ids[bad[0]]} is not counter-clockwise or is degenerate "
                    f"(signed area {area[ids[bad[0]]]:.3e})"
                )
            centroid[ids] = _centroid(p)
            diameter[ids] = _diameter(p)
            if validate and m > 3:
                self._check_simple(ids, p)
        self.area = _readonly(area)
        self.centroid = _readonly(centroid)
        self.diameter = _readonly(diameter)

    @staticmethod
    def _check_simple(ids, p):
        m = p.shape[1]
        a, b = p, np.roll(p, -1, axis=1)
        for i in range(m):
            for j in range(i + 2, m):
                if i == 0 and j == m - 1:
                    continue
                hit = _segments_cross(a[:, i], b[:, i], a[:, j], b[:, j])
                if hit.any():
                    raise MeshError(f"cell {ids[np.argmax(hit)]} is self-intersecting")

    def _build_edges(self):
        nv = len(self.vertices)
        tails = np.concatenate(self.cells)
        heads = np.concatenate([np.roll(c, -1) for c in self.cells])
        owner = np.repeat(np.arange(len(self.cells)), [len(c) for c in self.cells])
        key = np.minimum(tails, heads) * nv + np.maximum(tails, heads)
        # stable sort: the lowest-index cell owns the edge orientation
        order = np.argsort(key, kind="stable")
        uniq, first, inverse, counts = np.unique(
            key[order], return_index=True, return_inverse=True, return_counts=True
        )
        if counts.max() > 2:
            e = np.argmax(counts > 2)
            raise MeshError(f"edge {divmod(int(uniq[e]), nv)} is shared by more than two cells")
        ne = len(uniq)
        left = order[first]
        edge_vertices = np.stack([tails[left], heads[left]], axis=1)
        edge_cells = np.full((ne, 2), -1, dtype=np.int64)
        edge_cells[:, 0] = owner[left]
        local_edge = np.empty(len(key), dtype=np.int64)
        local_edge[order] = inverse
        sign = np.ones(len(key), dtype=np.int64)
        two = np.flatnonzero(counts == 2)
        second = order[first[two] + 1]
        if np.any(tails[second] == tails[left[two]]):
            e = two[np.argmax(tails[second] == tails[left[two]])]
            raise MeshError(
                f"cells {owner[left[e]]} and {owner[order[first[e] + 1]]} traverse "
                "their shared edge in the same direction (inconsistent orientation)"
            )
        edge_cells[two, 1] = owner[second]
        sign[second] = -1

        self.edge_vertices = _readonly(edge_vertices)
        self.edge_cells = _readonly(edge_cells)
        self.boundary = _readonly(edge_cells[:, 1] < 0)
        offsets = np.concatenate([[0], np.cumsum([len(c) for c in self.cells])])
        self._cell_edges = local_edge
        self._cell_signs = sign
        self._offsets = offsets

        a = self.vertices[edge_vertices[:, 0]]
        b = self.vertices[edge_vertices[:, 1]]
        t = b - a
        length = np.hypot(t[:, 0], t[:, 1])
        self.edge_length = _readonly(length)
        self.edge_midpoint = _readonly(0.5 * (a + b))
        self.edge_normal = _readonly(np.stack([t[:, 1], -t[:, 0]], axis=1) / length[:, None])

    # accessors ----------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edge_vertices)

    @property
    def h(self):
        """Mesh size, max cell diameter."""
        return float(self.diameter.max())

    def cell_edges(self, c):
        """Global edge ids of cell ``c`` in loop order (edge j joins vertex j to j+1)."""
        return self._cell_edges[self._offsets[c]:self._offsets[c + 1]]

    def cell_signs(self, c):
        """+1 where cell ``c`` is the left cell of its loop edge, else -1."""
        return self._cell_signs[self._offsets[c]:self._offsets[c + 1]]

    def cell_edges_array(self, ids, m):
        idx = self._offsets[np.asarray(ids)][:, None] + np.arange(m)
        return self._cell_edges[idx]

    def cell_signs_array(self, ids, m):
        idx = self._offsets[np.asarray(ids)][:, None] + np.arange(m)
        return self._cell_signs[idx]

    def groups(self):
        """Cells batched by vertex count, as a list of :class:`CellGroup`."""
        if self._groups is None:
            self._groups = [CellGroup(self, m, ids) for m, ids in self._by_size().items()]
        return self._groups

    def cell_points(self, c):
        return self.vertices[self.cells[c]]

    def hanging_vertices(self, tol=HANGING_TOL):
        """Pairs ``(vertex, edge)`` where a vertex lies strictly inside a single-sided edge."""
        return _find_hanging(self, tol)

    @property
    def is_conforming(self):
        return len(self.hanging_vertices()) == 0

    def __repr__(self):
        return (f"PolygonalMesh(n_vertices={self.n_vertices}, n_cells={self.n_cells}, "
                f"n_edges={self.n_edges}, h={self.h:.4g})")


# ----------------------------------------------------------------------
# geometry helpers

def _cross2(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _segments_cross(a, b, c, d, eps=1e-12):
    """True where segments ab and cd cross at a point interior to both."""
    d1 = _cross2(b - a, c - a)
    d2 = _cross2(b - a, d - a)
    d3 = _cross2(d - c, a - c)
    d4 = _cross2(d - c, b - c)
    s = eps * np.hypot(*np.moveaxis(b - a, -1, 0)) * np.hypot(*np.moveaxis(d - c, -1, 0))
    straddle1 = ((d1 > s) & (d2 < -s)) | ((d1 < -s) & (d2 > s))
    straddle2 = ((d3 > s) & (d4 < -s)) | ((d3 < -s) & (d4 > s))
    return straddle1 & straddle2


def _find_hanging(mesh, tol):
    single = np.flatnonzero(mesh.boundary)
    if len(single) == 0:
        return []
    cand = np.unique(mesh.edge_vertices[single])
    pv = mesh.vertices[cand]
    found = []
    chunk = max(1, 2_000_000 // max(len(cand), 1))
    for start in range(0, len(single), chunk):
        es = single[start:start + chunk]
        a = mesh.vertices[mesh.edge_vertices[es, 0]]
        b = mesh.vertices[mesh.edge_vertices[es, 1]]
        t = b - a
        L2 = (t**2).sum(axis=1)
        rel = pv[None, :, :] - a[:, None, :]
        s = (rel * t[:, None, :]).sum(axis=2) / L2[:, None]
        dist = np.abs(_cross2(rel, t[:, None, :])) / np.sqrt(L2)[:, None]
        L = np.sqrt(L2)[:, None]
        inside = (s * L > tol * L) & ((1 - s) * L > tol * L) & (dist <= tol * L)
        for i, j in zip(*np.nonzero(inside)):
            found.append((int(cand[j]), int(es[i]), float(s[i, j])))
    return found


# ----------------------------------------------------------------------
# generators

def build_uniform_rect(n):
    """``n x n`` squares on the unit square."""
    if n < 1:
        raise ValueError("n must be >= 1")
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v0 = (j * (n + 1) + i).ravel()
    cells = np.column_stack([v0, v0 + 1, v0 + n + 2, v0 + n + 1])
    return PolygonalMesh(vertices, cells)


def build_uniform_tri(n):
    """``n x n`` squares, each cut into two triangles by its negative-slope diagonal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    sw = (j * (n + 1) + i).ravel()
    se, ne, nw = sw + 1, sw + n + 2, sw + n + 1
    # diagonal se-nw runs from bottom-right to top-left
    lower = np.column_stack([sw, se, nw])
    upper = np.column_stack([se, ne, nw])
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper
    return PolygonalMesh(vertices, cells)


def refine_barycentric(mesh):
    """Join each cell's centroid to its edge midpoints.

    An m-gon yields m quadrilaterals ``(vertex, mid(next edge), centroid,
    mid(previous edge))``.  Midpoints are shared between neighbours.
    """
    nv = mesh.n_vertices
    ne = mesh.n_edges
    mids = mesh.edge_midpoint
    verts = np.vstack([mesh.vertices, mids, mesh.centroid])
    cells = []
    for c, loop in enumerate(mesh.cells):
        edges = mesh.cell_edges(c)
        m = len(loop)
        centre = nv + ne + c
        for j in range(m):
            cells.append((loop[j], nv + edges[j], centre, nv + edges[j - 1]))
    cells = np.array(cells, dtype=np.int64)
    p = verts[cells]
    area = _shoelace(p)
    bad = np.flatnonzero(area <= 0.0)
    if len(bad):
        parent = int(np.searchsorted(np.cumsum([len(c) for c in mesh.cells]), bad[0], side="right"))
        raise MeshError(f"refinement of cell {parent} produced a degenerate child")
    verts, cells = _merge_close(verts, cells, 1e-12 * mesh.h)
    return PolygonalMesh(verts, cells)


def _merge_close(verts, cells, tol):
    """Identify coincident vertices (e.g. a hanging node that is also a midpoint)."""
    from scipy.spatial import cKDTree

    pairs = cKDTree(verts).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return verts, cells
    target = np.arange(len(verts))
    for i, j in sorted(map(tuple, np.sort(pairs, axis=1)), reverse=True):
        target[j] = target[i]
    target = target[target]
    used = np.zeros(len(verts), dtype=bool)
    used[target] = True
    remap = np.cumsum(used) - 1
    return verts[used], remap[target[cells]]


def segment_hanging_edges(mesh, tol=HANGING_TOL):
    """Split edges carrying hanging vertices so that every edge is conforming.

    The coarse cell keeps its geometry; its vertex loop gains the hanging
    vertices, so its trace space becomes piecewise on the segments.
    """
    hanging = mesh.hanging_vertices(tol)
    if not hanging:
        _check_no_crossings(mesh)
        return mesh
    per_edge = {}
    for v, e, s in hanging:
        per_edge.setdefault(e, []).append((s, v))
    cells = [list(c) for c in mesh.cells]
    for e, items in per_edge.items():
        c = int(mesh.edge_cells[e, 0])
        a, b = mesh.edge_vertices[e]
        loop = cells[c]
        pos = next(i for i in range(len(loop)) if loop[i] == a and loop[(i + 1) % len(loop)] == b)
        inner = [v for _, v in sorted(items)]
        cells[c] = loop[:pos + 1] + inner + loop[pos + 1:]
    out = PolygonalMesh(mesh.vertices, cells)
    if out.hanging_vertices(tol):
        return segment_hanging_edges(out, tol)
    _check_no_crossings(out)
    return out


def _check_no_crossings(mesh):
    single = np.flatnonzero(mesh.boundary)
    if len(single) < 2:
        return
    a = mesh.vertices[mesh.edge_vertices[single, 0]]
    b = mesh.vertices[mesh.edge_vertices[single, 1]]
    chunk = max(1, 4_000_000 // len(single))
    for start in range(0, len(single), chunk):
        hit = _segments_cross(a[start:start + chunk, None], b[start:start + chunk, None],
                              a[None], b[None])
        if hit.any():
            i, j = np.argwhere(hit)[0]
            raise MeshError(
                f"edges {single[start + i]} and {single[j]} cross: nonconformity "
                "other than a hanging vertex"
            )


def regularity_report(mesh):
    """Exact minima of the A1-A2 shape-regularity ratios."""
    rho_v = float(np.min(mesh.area / mesh.diameter**2))
    rho_e = 1.0
    kappa = np.inf
    for g in mesh.groups():
        he = mesh.edge_length[g.edges]
        kappa = min(kappa, float((he / g.h[:, None]).min()))
    return RegularityReport(rho_v=rho_v, rho_e=rho_e, kappa=kappa)


# ----------------------------------------------------------------------
# file format

def write_mesh(mesh, path):
    """Write the line-oriented ``wgmesh`` text format."""
    with open(path, "w") as fh:
        fh.write(f"wgmesh 2 {mesh.n_vertices} {mesh.n_cells}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for loop in mesh.cells:
            fh.write(" ".join(str(int(i)) for i in [len(loop), *loop]) + "\n")


def read_mesh(path, validate=True):
    """Read a ``wgmesh`` file; errors carry the offending line number."""
    with open(path) as fh:
        lines = [(i + 1, ln.split()) for i, ln in enumerate(fh)]
    lines = [(i, t) for i, t in lines if t and not t[0].startswith("#")]
    if not lines:
        raise MeshFormatError("empty file")
    lineno, head = lines[0]
    if len(head) != 4 or head[0] != "wgmesh" or head[1] != "2":
        raise MeshFormatError("expected header 'wgmesh 2 <nv> <nc>'", lineno)
    try:
        nv, nc = int(head[2]), int(head[3])
    except ValueError:
        raise MeshFormatError("vertex and cell counts must be integers", lineno) from None
    if nc == 0:
        raise MeshFormatError("mesh has no cells", lineno)
    body = lines[1:]
    if len(body) < nv + nc:
        raise MeshFormatError(f"expected {nv} vertex and {nc} cell lines, file ends early",
                              lines[-1][0])
    vertices = np.empty((nv, 2))
    for i in range(nv):
        lineno, tok = body[i]
        if len(tok) != 2:
            raise MeshFormatError("vertex line must have two coordinates", lineno)
        try:
            vertices[i] = float(tok[0]), float(tok[1])
        except ValueError:
            raise MeshFormatError("bad vertex coordinate", lineno) from None
    cells = []
    for c in range(nc):
        lineno, tok = body[nv + c]
        try:
            vals = [int(t) for t in tok]
        except ValueError:
            raise MeshFormatError(f"cell {c}: non-integer entry", lineno) from None
        if not vals or vals[0] != len(vals) - 1:
            raise MeshFormatError(f"cell {c}: vertex count does not match entries", lineno)
        loop = vals[1:]
        if any(v < 0 or v >= nv for v in loop):
            raise MeshFormatError(f"cell {c} references a missing vertex", lineno)
        cells.append(loop)
    if len(body) > nv + nc:
        raise MeshFormatError("trailing content after cell list", body[nv + nc][0])
    return PolygonalMesh(vertices, cells, validate=validate)
