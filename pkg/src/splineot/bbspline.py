"""Bernstein-Bezier forms over a triangulation.

A spline is stored as one coefficient block per triangle (discontinuous
basis); smoothness across edges is imposed separately by the assembly module.
Block layout: triangle-major, multi-indices (i, j, k) with i+j+k = D sorted by
decreasing i then decreasing j.
"""

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import kernels
from ._tables import bernstein_values, block_size, lattice_multiindices
from .mesh import Triangulation


class OutOfDomainError(ValueError):
    pass


class SplineSpace:
    """Degree-D spline space with target smoothness r over a triangulation.

    The default guard D >= 3r+2 matches the regime in which smooth splines of
    full approximation power exist on arbitrary triangulations; pass
    force=True to experiment outside it.
    """

    def __init__(self, mesh: Triangulation, degree: int, smoothness: int = 2,
                 force: bool = False):
        if smoothness < 0:
            raise ValueError("smoothness must be >= 0")
        if degree < 1:
            raise ValueError("degree must be >= 1")
        if degree < 3 * smoothness + 2 and not force:
            raise ValueError(
                f"degree {degree} < 3*{smoothness}+2; pass force=True to override"
            )
        self.mesh = mesh
        self.degree = degree
        self.smoothness = smoothness

    @property
    def block(self) -> int:
        return block_size(self.degree)

    @property
    def size(self) -> int:
        return self.mesh.n_triangles * self.block

    def locate(self, points):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        tp, gb, bins = self.mesh.geometry_cache()
        return kernels.locate_points(pts[:, 0], pts[:, 1], tp, bins)

    def eval_located(self, coeffs, tri, bary, order: int = 2) -> np.ndarray:
        """Fields (P, 6): value, gx, gy, hxx, hxy, hyy at located points."""
        tp, gb, bins = self.mesh.geometry_cache()
        return kernels.eval_derivs(coeffs, tri, bary, gb, self.degree, order)

    def eval_fields(self, coeffs, points, order: int = 2, outside: str = "raise"):
        """Evaluate at arbitrary points.

        outside='raise' rejects exterior points; 'mask' returns (fields, mask)
        with exterior rows zeroed.
        """
        tri, bary = self.locate(points)
        if outside == "raise":
            if (tri < 0).any():
                bad = int(np.flatnonzero(tri < 0)[0])
                p = np.asarray(points, float).reshape(-1, 2)[bad]
                raise OutOfDomainError(f"point {tuple(p)} is outside the mesh")
            return self.eval_located(coeffs, tri, bary, order)
        fields = self.eval_located(coeffs, tri, bary, order)
        return fields, tri >= 0

    def derivative_rows(self, tri, bary, dx: int, dy: int) -> sp.csr_matrix:
        """Sparse rows, one per point: row . coeffs = d^dx_x d^dy_y s(point)."""
        tp, gb, bins = self.mesh.geometry_cache()
        dense = kernels.basis_rows(tri, bary, gb, self.degree, dx, dy)
        P, m = dense.shape
        cols = (np.asarray(tri, np.int64)[:, None] * m + np.arange(m)[None, :]).ravel()
        rows = np.repeat(np.arange(P), m)
        return sp.csr_matrix((dense.ravel(), (rows, cols)), shape=(P, self.size))

    def integral_weights(self) -> np.ndarray:
        """Dense vector w with w . coeffs = integral of the spline."""
        w = np.repeat(self.mesh.areas / self.block, self.block)
        return w

    def interpolate(self, fn) -> "BForm":
        """Per-triangle interpolation at the degree-D lattice points.

        Exact for global polynomials of total degree <= D.
        """
        D = self.degree
        idx = lattice_multiindices(D).astype(np.float64) / D
        tp = self.mesh.tri_points()  # (T, 3, 2)
        # (T, m, 2) lattice points
        pts = np.einsum("lk,tkx->tlx", idx, tp)
        vals = np.asarray(fn(pts[..., 0], pts[..., 1]), dtype=np.float64)
        vals = np.broadcast_to(vals, pts.shape[:2])
        lu = _lattice_lu(D)
        coeffs = scipy.linalg.lu_solve(lu, vals.T).T
        return BForm(self, np.ascontiguousarray(coeffs).ravel())

    def zero(self) -> "BForm":
        return BForm(self, np.zeros(self.size))


@lru_cache(maxsize=32)
def _lattice_lu(D: int):
    bary = lattice_multiindices(D).astype(np.float64) / D
    BV = bernstein_values(D, bary)
    return scipy.linalg.lu_factor(BV)


@dataclass
class BForm:
    space: SplineSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (self.space.size,):
            raise ValueError(
                f"coefficient vector has length {self.coeffs.size}, expected {self.space.size}"
            )

    def __call__(self, x, y):
        pts = np.column_stack([np.ravel(x), np.ravel(y)])
        out = self.space.eval_fields(self.coeffs, pts, order=0)[:, 0]
        return out.reshape(np.shape(x)) if np.ndim(x) else float(out[0])

    def grad(self, points) -> np.ndarray:
        f = self.space.eval_fields(self.coeffs, points, order=1)
        return f[:, 1:3]


def domain_points(mesh: Triangulation, degree_prime: int):
    """Deduplicated lattice points of degree D' over the mesh.

    Returns a DomainPointSet; shared points are owned by the lowest triangle.
    """
    if degree_prime < 1:
        raise ValueError("degree_prime must be >= 1")
    Dp = degree_prime
    idx = lattice_multiindices(Dp)
    bnd_edges = set()
    for a, b, _ in mesh.boundary_edges:
        bnd_edges.add((min(a, b), max(a, b)))
    pts, tris, barys, isb = [], [], [], []
    seen = {}
    verts = mesh.vertices
    for t, (va, vb, vc) in enumerate(mesh.triangles):
        pa, pb, pc = verts[va], verts[vb], verts[vc]
        eb = [
            (min(vb, vc), max(vb, vc)) in bnd_edges,  # i == 0 edge
            (min(vc, va), max(vc, va)) in bnd_edges,  # j == 0 edge
            (min(va, vb), max(va, vb)) in bnd_edges,  # k == 0 edge
        ]
        for i, j, k in idx:
            p = (pa * int(i) + pb * int(j) + pc * int(k)) / Dp
            key = (round(p[0] * 1e12), round(p[1] * 1e12))
            on_bnd = (i == 0 and eb[0]) or (j == 0 and eb[1]) or (k == 0 and eb[2])
            if key in seen:
                if on_bnd:
                    isb[seen[key]] = True
                continue
            seen[key] = len(pts)
            pts.append(p)
            tris.append(t)
            barys.append((i / Dp, j / Dp, k / Dp))
            isb.append(bool(on_bnd))
    return DomainPointSet(
        points=np.array(pts),
        tri=np.array(tris, dtype=np.int64),
        bary=np.array(barys),
        boundary_mask=np.array(isb, dtype=bool),
        degree_prime=Dp,
    )


@dataclass
class DomainPointSet:
    points: np.ndarray
    tri: np.ndarray
    bary: np.ndarray
    boundary_mask: np.ndarray
    degree_prime: int

    @property
    def n_interior(self) -> int:
        return int((~self.boundary_mask).sum())

    @property
    def n_boundary(self) -> int:
        return int(self.boundary_mask.sum())

    def interior(self):
        m = ~self.boundary_mask
        return self.points[m], self.tri[m], self.bary[m]

    def boundary(self):
        m = self.boundary_mask
        return self.points[m], self.tri[m], self.bary[m]


_FIELD = {(0, 0): 0, (1, 0): 1, (0, 1): 2, (2, 0): 3, (1, 1): 4, (0, 2): 5}


def eval_bform(s: BForm, p, dx: int = 0, dy: int = 0) -> float:
    """Evaluate d^dx_x d^dy_y s at one point (0 <= dx+dy <= 2)."""
    if (dx, dy) not in _FIELD:
        raise ValueError("only derivatives up to total order 2 are supported")
    f = s.space.eval_fields(s.coeffs, np.asarray(p, float).reshape(1, 2), order=dx + dy)
    return float(f[0, _FIELD[(dx, dy)]])


def hessian_det_lap(s: BForm, p):
    """(det D^2 s, laplacian, gradient) at one point."""
    from .mesh import Point2

    f = s.space.eval_fields(s.coeffs, np.asarray(p, float).reshape(1, 2), order=2)[0]
    det = f[3] * f[5] - f[4] ** 2
    return float(det), float(f[3] + f[5]), Point2(float(f[1]), float(f[2]))


def basis_derivative_row(space: SplineSpace, p, dx: int = 0, dy: int = 0) -> sp.csr_matrix:
    """Sparse row r with r . coeffs = d^dx_x d^dy_y s(p) for any BForm."""
    tri, bary = space.locate(np.asarray(p, float).reshape(1, 2))
    if tri[0] < 0:
        raise OutOfDomainError(f"point {tuple(np.asarray(p, float))} is outside the mesh")
    return space.derivative_rows(tri, bary, dx, dy)


def integral_bform(s: BForm) -> float:
    """Exact integral: sum over triangles of area/block * coefficient sum."""
    return float(s.space.integral_weights() @ s.coeffs)


def bform_to_json(s: BForm) -> str:
    payload = {
        "degree": s.space.degree,
        "smoothness": s.space.smoothness,
        "mesh_hash": s.space.mesh.content_hash(),
        "coeffs": s.coeffs.tolist(),
    }
    return json.dumps(payload)


def bform_from_json(text: str, mesh: Triangulation) -> BForm:
    payload = json.loads(text)
    if payload["mesh_hash"] != mesh.content_hash():
        raise ValueError("mesh hash mismatch: solution was computed on a different mesh")
    space = SplineSpace(mesh, int(payload["degree"]), int(payload["smoothness"]), force=True)
    return BForm(space, np.asarray(payload["coeffs"], dtype=np.float64))
