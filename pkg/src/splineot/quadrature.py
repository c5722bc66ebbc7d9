"""Gauss quadrature on triangles via the collapsed-square (Duffy) map."""

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss


@lru_cache(maxsize=32)
def triangle_rule(order: int):
    """Barycentric points and weights, exact for polynomials of total degree
    <= order; weights sum to 1 (multiply by the triangle area).
    """
    n = max(1, (order + 3) // 2)
    x, w = leggauss(n)
    s = 0.5 * (x + 1.0)  # nodes on [0,1]
    ws = 0.5 * w
    S, T = np.meshgrid(s, s, indexing="ij")
    WS, WT = np.meshgrid(ws, ws, indexing="ij")
    l1 = 1.0 - S
    l2 = S * (1.0 - T)
    l3 = S * T
    bary = np.column_stack([l1.ravel(), l2.ravel(), l3.ravel()])
    weights = (2.0 * WS * WT * S).ravel()
    return bary, weights


def mesh_quadrature(mesh, order: int):
    """Quadrature points over all triangles: (points (Q,2), weights (Q,),
    tri (Q,), bary (Q,3)); weights include triangle areas."""
    bary, w = triangle_rule(order)
    tp = mesh.tri_points()
    pts = np.einsum("qk,tkx->tqx", bary, tp).reshape(-1, 2)
    tri = np.repeat(np.arange(mesh.n_triangles), len(w))
    weights = (mesh.areas[:, None] * w[None, :]).ravel()
    return pts, weights, tri, np.tile(bary, (mesh.n_triangles, 1))
