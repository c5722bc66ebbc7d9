"""Triangulations and star-shaped domains.

Geometry layer: parsing Triangle-format meshes, edge adjacency, boundary
loops, star-shape validation, ray/boundary intersection and the boundary
collocation records used by the solvers.
"""

from typing import NamedTuple, Optional

import numpy as np

from . import kernels


class MeshError(ValueError):
    pass


class StarShapeError(ValueError):
    pass


class Point2(NamedTuple):
    x: float
    y: float


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area of a closed polyline (first point not repeated)."""
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(poly: np.ndarray) -> np.ndarray:
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


def points_in_polygon(px, py, poly: np.ndarray) -> np.ndarray:
    """Crossing-number inside test, vectorized over points."""
    px = np.asarray(px, dtype=np.float64).ravel()
    py = np.asarray(py, dtype=np.float64).ravel()
    inside = np.zeros(px.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        cond = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= cond & (px < xint)
    return inside


def polyline_distance(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance from each point to the closed polyline through poly."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom < 1e-300, 1.0, denom)
    # (P, S) projection parameter clipped to the segment
    ap = p[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("psj,sj->ps", ap, ab) / denom[None, :], 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    d = np.linalg.norm(p[:, None, :] - closest, axis=2)
    return d.min(axis=1)


class Triangulation:
    """Validated triangle mesh with edge adjacency and boundary loops.

    vertices : (V, 2) float array
    triangles : (T, 3) int array, counterclockwise
    interior_edges : (Ei, 4) int array [va, vb, tri_left, tri_right]; the edge
        runs a->b counterclockwise within tri_left
    boundary_edges : (Eb, 3) int array [va, vb, tri] in loop-traversal order
    boundary_loops : list of int vertex arrays, each a closed loop
    """

    def __init__(self, vertices, triangles, reorient: bool = True):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        t = np.ascontiguousarray(triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise MeshError("vertices must be (V, 2)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must be (T, 3)")
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinates")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle vertex index out of range")

        # duplicate vertices
        order = np.lexsort((v[:, 1], v[:, 0]))
        sv = v[order]
        if len(v) > 1:
            close = np.linalg.norm(np.diff(sv, axis=0), axis=1) <= 1e-12
            if close.any():
                i = int(np.flatnonzero(close)[0])
                raise MeshError(
                    f"duplicate vertices {order[i]} and {order[i + 1]} within 1e-12"
                )

        used = np.zeros(len(v), dtype=bool)
        used[t.ravel()] = True
        if not used.all():
            raise MeshError(f"dangling vertex {int(np.flatnonzero(~used)[0])}")

        areas = self._signed_areas(v, t)
        if reorient:
            flip = areas < 0
            if flip.any():
                t = t.copy()
                t[flip] = t[flip][:, [0, 2, 1]]
                areas = np.abs(areas)
        bbox = (v[:, 0].max() - v[:, 0].min()) * (v[:, 1].max() - v[:, 1].min())
        if np.any(areas <= 1e-14 * max(bbox, 1e-300)):
            bad = int(np.argmin(areas))
            raise MeshError(f"degenerate triangle {bad} (area {areas[bad]:.3e})")

        self.vertices = v
        self.triangles = t
        self.areas = areas
        self._build_edges()
        self._cache = None

    @staticmethod
    def _signed_areas(v, t):
        p = v[t]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    def _build_edges(self):
        edges = {}
        for ti, tri in enumerate(self.triangles):
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                edges.setdefault(key, []).append((ti, int(a), int(b)))
        interior, boundary = [], []
        for key, owners in edges.items():
            if len(owners) > 2:
                raise MeshError(f"non-manifold edge {key} shared by {len(owners)} triangles")
            if len(owners) == 2:
                (tl, a, b), (tr, a2, b2) = owners
                if a == a2:
                    raise MeshError(f"inconsistent orientation across edge {key}")
                interior.append((a, b, tl, tr))
            else:
                (ti, a, b) = owners[0]
                boundary.append((a, b, ti))

        self.interior_edges = (
            np.array(interior, dtype=np.int64) if interior else np.zeros((0, 4), np.int64)
        )
        self.edge_count = len(edges)

        # chain boundary edges into closed loops
        nxt = {}
        for a, b, ti in boundary:
            if a in nxt:
                raise MeshError(f"non-manifold boundary vertex {a}")
            nxt[a] = (b, ti)
        loops, ordered = [], []
        seen = set()
        for a0 in sorted(nxt):
            if a0 in seen:
                continue
            loop = [a0]
            a = a0
            while True:
                if a not in nxt:
                    raise MeshError(f"open boundary chain at vertex {a}")
                b, ti = nxt[a]
                ordered.append((a, b, ti))
                seen.add(a)
                if b == a0:
                    break
                if b in seen:
                    raise MeshError(f"boundary loop does not close at vertex {b}")
                loop.append(b)
                a = b
            loops.append(np.array(loop, dtype=np.int64))
        self.boundary_edges = (
            np.array(ordered, dtype=np.int64) if ordered else np.zeros((0, 3), np.int64)
        )
        self.boundary_loops = loops

        p = self.vertices
        all_e = [(a, b) for a, b, *_ in boundary] + [
            (r[0], r[1]) for r in self.interior_edges
        ]
        if all_e:
            e = np.array(all_e)
            self.mesh_size = float(np.linalg.norm(p[e[:, 0]] - p[e[:, 1]], axis=1).max())
        else:
            self.mesh_size = 0.0

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.edge_count + self.n_triangles

    def tri_points(self) -> np.ndarray:
        return np.ascontiguousarray(self.vertices[self.triangles])

    def geometry_cache(self):
        """(tri_pts, grad_bary, bins) for the evaluation kernels."""
        if self._cache is None:
            tp = self.tri_points()
            det = 2.0 * self.areas
            gb = np.empty((self.n_triangles, 3, 2))
            x, y = tp[:, :, 0], tp[:, :, 1]
            gb[:, 0, 0] = (y[:, 1] - y[:, 2]) / det
            gb[:, 0, 1] = (x[:, 2] - x[:, 1]) / det
            gb[:, 1, 0] = (y[:, 2] - y[:, 0]) / det
            gb[:, 1, 1] = (x[:, 0] - x[:, 2]) / det
            gb[:, 2, 0] = (y[:, 0] - y[:, 1]) / det
            gb[:, 2, 1] = (x[:, 1] - x[:, 0]) / det
            bins = kernels.build_bins(tp)
            self._cache = (tp, np.ascontiguousarray(gb), bins)
        return self._cache

    def translate(self, shift) -> "Triangulation":
        return Triangulation(self.vertices + np.asarray(shift, float), self.triangles.copy(),
                             reorient=False)

    def refine_uniform(self) -> "Triangulation":
        """Split every triangle into four via edge midpoints."""
        v = list(self.vertices)
        mid = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in mid:
                mid[key] = len(v)
                v.append(0.5 * (self.vertices[a] + self.vertices[b]))
            return mid[key]

        tris = []
        for a, b, c in self.triangles:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            tris += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        return Triangulation(np.array(v), np.array(tris, dtype=np.int64), reorient=False)

    def content_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        h.update(np.ascontiguousarray(self.triangles).tobytes())
        return h.hexdigest()[:16]


def parse_mesh(node_text: str, ele_text: str) -> Triangulation:
    """Parse Triangle-format .node/.ele text (1-based indices)."""

    def tokens(text):
        out = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                out.append(line.split())
        return out

    nrows = tokens(node_text)
    if not nrows:
        raise MeshError("empty node file")
    try:
        nv = int(nrows[0][0])
    except ValueError as e:
        raise MeshError(f"malformed node header: {e}") from None
    if len(nrows) - 1 < nv:
        raise MeshError(f"node file declares {nv} vertices, found {len(nrows) - 1}")
    verts = np.empty((nv, 2))
    for r in nrows[1 : nv + 1]:
        try:
            idx = int(r[0])
            x, y = float(r[1]), float(r[2])
        except (ValueError, IndexError) as e:
            raise MeshError(f"malformed node row {r!r}: {e}") from None
        if not (1 <= idx <= nv):
            raise MeshError(f"node index {idx} out of range 1..{nv}")
        verts[idx - 1] = (x, y)

    erows = tokens(ele_text)
    if not erows:
        raise MeshError("empty ele file")
    try:
        nt = int(erows[0][0])
    except ValueError as e:
        raise MeshError(f"malformed ele header: {e}") from None
    if len(erows) - 1 < nt:
        raise MeshError(f"ele file declares {nt} triangles, found {len(erows) - 1}")
    tris = np.empty((nt, 3), dtype=np.int64)
    for r in erows[1 : nt + 1]:
        try:
            idx = int(r[0])
            abc = [int(r[1]), int(r[2]), int(r[3])]
        except (ValueError, IndexError) as e:
            raise MeshError(f"malformed ele row {r!r}: {e}") from None
        if not (1 <= idx <= nt):
            raise MeshError(f"ele index {idx} out of range 1..{nt}")
        for q in abc:
            if not (1 <= q <= nv):
                raise MeshError(f"vertex index {q} out of range 1..{nv}")
        tris[idx - 1] = [q - 1 for q in abc]
    return Triangulation(verts, tris)


def format_mesh(tri: Triangulation) -> tuple[str, str]:
    """Serialize to Triangle-format .node/.ele text (1-based indices)."""
    lines = [f"{tri.n_vertices} 2 0 0"]
    for i, (x, y) in enumerate(tri.vertices, start=1):
        lines.append(f"{i} {x!r} {y!r}")
    node = "\n".join(lines) + "\n"
    lines = [f"{tri.n_triangles} 3 0"]
    for i, (a, b, c) in enumerate(tri.triangles, start=1):
        lines.append(f"{i} {a + 1} {b + 1} {c + 1}")
    return node, "\n".join(lines) + "\n"


class StarDomain:
    """Closed polyline boundary with a center every ray exits exactly once."""

    def __init__(self, boundary, center=None, check: bool = True, n_check: int = 720):
        poly = np.ascontiguousarray(boundary, dtype=np.float64)
        if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
            raise StarShapeError("boundary must be (M, 2) with M >= 3")
        if np.linalg.norm(poly[0] - poly[-1]) <= 1e-14:
            poly = poly[:-1]
        area = polygon_area(poly)
        if area < 0:
            poly = poly[::-1].copy()
            area = -area
        if area <= 0:
            raise StarShapeError("degenerate boundary polygon")
        self.boundary = poly
        self.area = float(area)
        c = polygon_centroid(poly) if center is None else np.asarray(center, float)
        self.center = c
        self.diameter = float(
            np.linalg.norm(poly.max(axis=0) - poly.min(axis=0))
        )
        if check:
            if not bool(points_in_polygon(c[0], c[1], poly)[0]):
                raise StarShapeError(f"center {tuple(c)} is not inside the boundary polygon")
            if polyline_distance(c[None, :], poly)[0] < 1e-12 * self.diameter:
                raise StarShapeError("center lies on the boundary")
            self._check_star(n_check)

    def _ray_hits(self, theta: float):
        """All (t, point) ray/boundary intersections, deduplicated, t ascending."""
        c = self.center
        d = np.array([np.cos(theta), np.sin(theta)])
        a = self.boundary
        b = np.roll(a, -1, axis=0)
        ab = b - a
        denom = d[0] * ab[:, 1] - d[1] * ab[:, 0]
        ac = a - c
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (ac[:, 0] * ab[:, 1] - ac[:, 1] * ab[:, 0]) / denom
            s = (ac[:, 0] * d[1] - ac[:, 1] * d[0]) / denom
        scale = self.diameter
        ok = (np.abs(denom) > 1e-14) & (t > 1e-12) & (s >= -1e-12) & (s <= 1 + 1e-12)
        ts = np.sort(t[ok])
        hits = []
        for tv in ts:
            if not hits or tv - hits[-1] > 1e-9 * scale:
                hits.append(tv)
        return [(tv, c + tv * d) for tv in hits]

    def _check_star(self, n_check: int):
        for theta in np.linspace(0.0, 2 * np.pi, n_check, endpoint=False):
            hits = self._ray_hits(theta)
            if len(hits) != 1:
                raise StarShapeError(
                    f"star-shape check failed at angle {theta:.6f} rad: "
                    f"{len(hits)} boundary crossings from center {tuple(self.center)}"
                )

    def translate(self, shift) -> "StarDomain":
        s = np.asarray(shift, float)
        return StarDomain(self.boundary + s, center=self.center + s, check=False)

    def contains(self, px, py) -> np.ndarray:
        return points_in_polygon(px, py, self.boundary)


def make_star_domain(boundary, center: Optional[tuple] = None) -> StarDomain:
    return StarDomain(boundary, center=None if center is None else np.asarray(center, float))


def ray_exit_point(domain: StarDomain, theta: float) -> Point2:
    """Unique intersection of the ray from the center at angle theta."""
    hits = domain._ray_hits(theta)
    if not hits:
        raise StarShapeError(f"no boundary intersection at angle {theta:.6f}")
    p = hits[0][1]
    return Point2(float(p[0]), float(p[1]))


def boundary_collocation(domain: StarDomain, mesh: Triangulation, degree_prime: int):
    """Boundary lattice points with outward edge normals and center angles.

    Returns (points (M,2), normals (M,2), thetas (M,)).  Corner points take
    the normal of the lowest-index boundary edge containing them.
    """
    if degree_prime < 1:
        raise ValueError("degree_prime must be >= 1")
    verts = mesh.vertices
    pts, normals, thetas = [], [], []
    seen = {}
    c = domain.center
    for a, b, ti in mesh.boundary_edges:
        pa, pb = verts[a], verts[b]
        e = pb - pa
        ln = np.hypot(e[0], e[1])
        n = np.array([e[1], -e[0]]) / ln
        third = [q for q in mesh.triangles[ti] if q != a and q != b][0]
        if np.dot(n, verts[third] - 0.5 * (pa + pb)) > 0:
            n = -n
        for l in range(degree_prime + 1):
            p = (pa * (degree_prime - l) + pb * l) / degree_prime
            key = (round(p[0] * 1e12), round(p[1] * 1e12))
            if key in seen:
                continue
            seen[key] = True
            pts.append(p)
            normals.append(n)
            thetas.append(np.arctan2(p[1] - c[1], p[0] - c[0]))
    pts = np.array(pts)
    d = polyline_distance(pts, domain.boundary)
    if d.max() > 1e-9 * max(1.0, domain.diameter):
        raise MeshError(
            f"mesh boundary deviates from domain boundary by {d.max():.3e}"
        )
    return pts, np.array(normals), np.array(thetas)
