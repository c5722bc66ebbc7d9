"""Assembly of the collocation systems.

Builds the cross-edge smoothness matrix H, Laplacian rows K at interior
lattice points, boundary rows (value or normal-derivative), the mean-value
row, and the nonlinear right-hand side / residual fields of the iteration.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ._tables import bernstein_values, block_size, lattice_index, lattice_multiindices
from .bbspline import BForm, DomainPointSet, SplineSpace
from .densities import DensityPair


def smoothness_matrix(space: SplineSpace) -> sp.csr_matrix:
    """Linear conditions whose kernel is the C^r spline space.

    For every interior edge and every order n <= r, relates the coefficients
    of the two adjacent blocks through the Bernstein coefficients of the
    opposite vertex; H @ c = 0 exactly iff the piecewise polynomial is C^r
    across all interior edges.
    """
    mesh = space.mesh
    D, r = space.degree, space.smoothness
    m = block_size(D)
    verts = mesh.vertices
    tris = mesh.triangles
    data, rows, cols = [], [], []
    row = 0
    canon = lattice_multiindices(D)
    for a, b, tl, tr in mesh.interior_edges:
        vl = [q for q in tris[tl] if q != a and q != b][0]
        vr = [q for q in tris[tr] if q != a and q != b][0]

        def block_map(t, order):
            pos = {int(v): p for p, v in enumerate(tris[t])}
            perm = [pos[order[0]], pos[order[1]], pos[order[2]]]
            out = np.empty(m, dtype=np.int64)
            for p, (i1, i2, i3) in enumerate(canon):
                s = [0, 0, 0]
                s[perm[0]], s[perm[1]], s[perm[2]] = int(i1), int(i2), int(i3)
                out[p] = lattice_index(D, s[0], s[1], s[2])
            return out

        mapL = block_map(tl, (vl, a, b))
        mapR = block_map(tr, (vr, b, a))

        # barycentric coordinates of the right apex w.r.t. (vl, a, b)
        p1, p2, p3 = verts[vl], verts[a], verts[b]
        p4 = verts[vr]
        det = (p2[0] - p1[0]) * (p3[1] - p1[1]) - (p3[0] - p1[0]) * (p2[1] - p1[1])
        l2 = ((p4[0] - p1[0]) * (p3[1] - p1[1]) - (p4[1] - p1[1]) * (p3[0] - p1[0])) / det
        l3 = ((p2[0] - p1[0]) * (p4[1] - p1[1]) - (p2[1] - p1[1]) * (p4[0] - p1[0])) / det
        bc = np.array([1.0 - l2 - l3, l2, l3])

        offL = tl * m
        offR = tr * m
        for n in range(r + 1):
            wts = bernstein_values(n, bc)
            nidx = lattice_multiindices(n)
            for j in range(D - n, -1, -1):
                k = D - n - j
                rows.append(row)
                cols.append(offR + mapR[lattice_index(D, n, j, k)])
                data.append(1.0)
                for (nu, mu, ka), w in zip(nidx, wts):
                    rows.append(row)
                    cols.append(
                        offL + mapL[lattice_index(D, int(nu), k + int(mu), j + int(ka))]
                    )
                    data.append(-w)
                row += 1
    return sp.csr_matrix((data, (rows, cols)), shape=(row, space.size))


def assemble_laplace(space: SplineSpace, pts: DomainPointSet):
    """One Laplacian row per interior lattice point."""
    p, tri, bary = pts.interior()
    K = space.derivative_rows(tri, bary, 2, 0) + space.derivative_rows(tri, bary, 0, 2)
    return K.tocsr(), p


def assemble_dirichlet(space: SplineSpace, pts: DomainPointSet, h):
    """Evaluation row and rhs h(p) for each boundary lattice point."""
    p, tri, bary = pts.boundary()
    B = space.derivative_rows(tri, bary, 0, 0)
    rhs = np.asarray(h(p[:, 0], p[:, 1]), dtype=np.float64)
    if not np.all(np.isfinite(rhs)):
        raise ValueError("boundary data not evaluable at a collocation point")
    return B, rhs


def assemble_neumann(space: SplineSpace, points, normals, targets=None):
    """Normal-derivative rows at boundary points.

    Row = n . grad at each point; rhs entry = target . n when targets given.
    """
    normals = np.asarray(normals, float)
    ln = np.linalg.norm(normals, axis=1)
    if (ln < 1e-300).any():
        raise ValueError("zero-length normal")
    tri, bary = space.locate(points)
    Bx = space.derivative_rows(tri, bary, 1, 0)
    By = space.derivative_rows(tri, bary, 0, 1)
    B = sp.diags(normals[:, 0]) @ Bx + sp.diags(normals[:, 1]) @ By
    rhs = None
    if targets is not None:
        rhs = np.einsum("ij,ij->i", np.asarray(targets, float), normals)
    return B.tocsr(), rhs


def mean_value_row(space: SplineSpace) -> np.ndarray:
    """Dense row with row . coeffs = integral of the spline over the mesh."""
    return space.integral_weights()


def subharmonic_rhs(lap, det, ratio, floor_sq: float):
    """Update magnitude sqrt(lap^2 + 4 (ratio - max(0, det))).

    The radicand is floored at floor_sq = 4 f0/g_max (its theoretical lower
    bound) so the returned values never drop below 2 sqrt(f0/g_max); the
    number of floored entries is reported.
    """
    rad = lap**2 + 4.0 * (ratio - np.maximum(det, 0.0))
    clamped = rad < floor_sq
    if clamped.any():
        rad = np.where(clamped, floor_sq, rad)
    return np.sqrt(rad), int(clamped.sum())


def mae_rhs(u_k: BForm, u_ref: BForm, densities: DensityPair, pts, tri=None, bary=None):
    """Right-hand side of one subharmonic step at the given points.

    The density ratio is evaluated with the gradient of u_ref (the stage
    reference iterate), the Laplacian/determinant with the current u_k.
    """
    space = u_k.space
    pts = np.asarray(pts, float).reshape(-1, 2)
    if tri is None:
        tri, bary = space.locate(pts)
    fk = space.eval_located(u_k.coeffs, tri, bary, order=2)
    fr = fk if u_ref is u_k else space.eval_located(u_ref.coeffs, tri, bary, order=1)
    ratio = densities.ratio(pts, fr[:, 1:3])
    lap = fk[:, 3] + fk[:, 5]
    det = fk[:, 3] * fk[:, 5] - fk[:, 4] ** 2
    rhs, _ = subharmonic_rhs(lap, det, ratio, densities.floor_sq)
    return rhs


def mae_residual(u: BForm, densities: DensityPair, grid_pts, tri=None, bary=None):
    """Pointwise defect det(D^2 u) - f/g(grad u) with its RMSE and sup norm."""
    space = u.space
    pts = np.asarray(grid_pts, float).reshape(-1, 2)
    if tri is None:
        tri, bary = space.locate(pts)
    f = space.eval_located(u.coeffs, tri, bary, order=2)
    det = f[:, 3] * f[:, 5] - f[:, 4] ** 2
    ratio = densities.ratio(pts, f[:, 1:3])
    field = det - ratio
    rmse = float(np.sqrt(np.mean(field**2)))
    return rmse, float(np.abs(field).max()), field


@dataclass
class CollocationSystem:
    """Assembled operators of one linearized solve."""

    K: sp.csr_matrix
    B: sp.csr_matrix
    H: sp.csr_matrix
    mean_row: Optional[np.ndarray]
    rhs_K: np.ndarray
    rhs_B: np.ndarray
    alpha: float = 1.0
    beta: float = 100.0
    eps1: Optional[float] = None
    interior_points: np.ndarray = field(default=None)
