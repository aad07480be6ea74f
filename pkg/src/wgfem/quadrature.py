"""Quadrature on polygons (centroid fan) and on straight edges."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray  # (nq, 2)
    weights: np.ndarray  # (nq,)
    exactness: int

    def integrate(self, f):
        """Integrate ``f(x)`` where ``x`` has shape ``(2, nq)``."""
        return float(np.dot(self.weights, f(self.points.T)))


@lru_cache(maxsize=None)
def gauss_legendre(exactness):
    """Gauss-Legendre nodes on [-1/2, 1/2], weights summing to one."""
    n = max(1, (exactness + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * x, 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(exactness):
    """Collapsed Gauss-Jacobi rule on the reference triangle.

    Returns barycentric-style coordinates ``(nq, 3)`` and weights summing
    to one.  Exact for total degree ``exactness``; all weights positive.
    """
    n = max(1, (exactness + 2) // 2)
    # (1 - a) Jacobian of the collapse map folded into the Jacobi weight
    xa, wa = roots_jacobi(n, 1.0, 0.0)
    xb, wb = np.polynomial.legendre.leggauss(n)
    a = 0.5 * (xa + 1.0)
    b = 0.5 * (xb + 1.0)
    wa = wa / 4.0
    wb = wb / 2.0
    A, B = np.meshgrid(a, b, indexing="ij")
    l1 = A.ravel()
    l2 = ((1.0 - A) * B).ravel()
    lam = np.column_stack([1.0 - l1 - l2, l1, l2])
    w = np.outer(wa, wb).ravel() * 2.0
    return lam, w


def fan_rule(points, centroid, exactness):
    """Batched polygon quadrature.

    Parameters
    ----------
    points : (N, m, 2) polygon vertices (counter-clockwise)
    centroid : (N, 2) fan anchor

    Returns
    -------
    x : (N, m * nq, 2), w : (N, m * nq)
    """
    lam, wref = triangle_rule(exactness)
    p0 = centroid[:, None, :]
    p1 = points
    p2 = np.roll(points, -1, axis=1)
    d1, d2 = p1 - p0, p2 - p0
    tri_area = 0.5 * (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])
    if np.any(tri_area <= 0.0):
        raise ValueError("cell not star-shaped w.r.t. centroid")
    x = (p0[:, :, None, :]
         + lam[:, 1, None] * d1[:, :, None, :]
         + lam[:, 2, None] * d2[:, :, None, :])
    w = tri_area[:, :, None] * wref[None, None, :]
    N, m = tri_area.shape
    return x.reshape(N, m * len(wref), 2), w.reshape(N, m * len(wref))


def polygon_rule(vertices, exactness):
    """Quadrature rule for a single polygon given by its CCW vertices."""
    if exactness < 0:
        raise ValueError("exactness must be >= 0")
    p = np.asarray(vertices, dtype=float)[None]
    from .mesh import _centroid

    x, w = fan_rule(p, _centroid(p), exactness)
    return QuadRule(x[0], w[0], exactness)


def edge_points(a, b, exactness):
    """Batched Gauss-Legendre points on segments ``a -> b``.

    ``a, b`` have shape (..., 2).  Returns points (..., ng, 2), weights
    (..., ng) and the reference parameter ``s`` in [-1/2, 1/2] (ng,).
    """
    s, w = gauss_legendre(exactness)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = 0.5 * (a + b)
    t = b - a
    x = mid[..., None, :] + s[:, None] * t[..., None, :]
    length = np.hypot(t[..., 0], t[..., 1])
    return x, length[..., None] * w, s


def edge_rule(a, b, exactness):
    """Gauss-Legendre rule on the segment ``a -> b``."""
    if exactness < 0:
        raise ValueError("exactness must be >= 0")
    x, w, _ = edge_points(a, b, exactness)
    return QuadRule(x, w, exactness)
