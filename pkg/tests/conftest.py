import numpy as np
import pytest
from scipy.spatial import ConvexHull, cKDTree

from wgfem.mesh import PolygonalMesh

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def _clip(poly, axis, value, keep_below):
    """Sutherland-Hodgman clip of a polygon against one axis-aligned half plane."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        pin = p[axis] <= value if keep_below else p[axis] >= value
        qin = q[axis] <= value if keep_below else q[axis] >= value
        if pin:
            out.append(p)
        if pin != qin:
            t = (value - p[axis]) / (q[axis] - p[axis])
            out.append(p + t * (q - p))
    return out


def honeycomb_mesh(n):
    """Regular hexagons clipped to the unit square, about ``n`` across."""
    r = 1.0 / (n * np.sqrt(3.0))
    dx, dy = np.sqrt(3.0) * r, 1.5 * r
    polys = []
    for j in range(-1, int(1.0 / dy) + 2):
        for i in range(-1, n + 2):
            cx = i * dx + (dx / 2 if j % 2 else 0.0) + 0.1234 * dx
            cy = j * dy + 0.0771 * dy
            ang = np.pi / 6 + np.arange(6) * np.pi / 3
            poly = [np.array([cx + r * np.cos(a), cy + r * np.sin(a)]) for a in ang]
            for axis, value, below in ((0, 0.0, False), (0, 1.0, True), (1, 0.0, False), (1, 1.0, True)):
                poly = _clip(poly, axis, value, below)
                if not poly:
                    break
            if len(poly) >= 3:
                p = np.array(poly)
                area = 0.5 * np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1])
                if area > 1e-3 * r * r:
                    polys.append(p)
    pts = np.vstack(polys)
    tree = cKDTree(pts)
    groups = tree.query_ball_point(pts, 1e-9)
    rep = np.array([min(g) for g in groups])
    uniq, inv = np.unique(rep, return_inverse=True)
    vertices = pts[uniq]
    cells, start = [], 0
    for p in polys:
        loop = list(inv[start:start + len(p)])
        start += len(p)
        # drop repeated consecutive vertices left by clipping at corners
        loop = [v for k, v in enumerate(loop) if v != loop[k - 1]]
        cells.append(loop)
    return PolygonalMesh(vertices, cells)


def random_convex_polygon(rng, npts=None):
    npts = npts or int(rng.integers(5, 12))
    while True:
        pts = rng.uniform(-1.0, 1.0, size=(npts, 2)) * rng.uniform(0.1, 3.0, size=2)
        hull = ConvexHull(pts)
        verts = pts[hull.vertices]  # counter-clockwise
        if len(verts) >= 3 and hull.volume > 1e-2 * np.ptp(pts, axis=0).prod():
            return verts + rng.uniform(-5, 5, size=2)


def single_cell_mesh(verts):
    return PolygonalMesh(verts, [list(range(len(verts)))])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_cell_mesh():
    """A quadrilateral and a pentagon sharing one edge."""
    v = np.array([[0.0, 0.0], [1.0, 0.1], [0.9, 1.0], [0.1, 0.8],
                  [1.8, 0.3], [2.0, 1.1], [1.4, 1.5]])
    return PolygonalMesh(v, [[0, 1, 2, 3], [1, 4, 5, 6, 2]])
