"""Builtin domains and mesh builders (square, disk, L, moon, oval)."""

import numpy as np

from .mesh import MeshError, StarDomain, Triangulation, points_in_polygon


def rect_domain(x0, x1, y0, y1) -> StarDomain:
    return StarDomain(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], float))


def square_domain(a, b) -> StarDomain:
    return rect_domain(a, b, a, b)


def disk_domain(cx=0.0, cy=0.0, r=1.0, n=64) -> StarDomain:
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    poly = np.column_stack([cx + r * np.cos(th), cy + r * np.sin(th)])
    return StarDomain(poly, center=np.array([cx, cy]))


def oval_domain(rx=1.0, ry=0.6, n=64) -> StarDomain:
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    poly = np.column_stack([rx * np.cos(th), ry * np.sin(th)])
    return StarDomain(poly, center=np.zeros(2))


def lshape_domain() -> StarDomain:
    # [-1,1]^2 minus the open lower-right quadrant; centroid sits in the kernel
    poly = np.array(
        [[-1, -1], [0, -1], [0, 0], [1, 0], [1, 1], [-1, 1]], dtype=float
    )
    return StarDomain(poly)


def moon_domain(n=96) -> StarDomain:
    """Crescent: unit disk minus a disk of radius 0.85 centered at (0.7, 0)."""
    cb, rb = 0.7, 0.85
    xi = (cb * cb + 1.0 - rb * rb) / (2 * cb)
    yi = np.sqrt(1.0 - xi * xi)
    th1 = np.arctan2(yi, xi)
    # outer arc, counterclockwise through the left side
    ta = np.linspace(th1, 2 * np.pi - th1, n)
    outer = np.column_stack([np.cos(ta), np.sin(ta)])
    # inner concave arc back along the small circle
    p1 = np.arctan2(-yi, xi - cb)
    p2 = np.arctan2(yi, xi - cb)
    tb = np.linspace(p1 + 2 * np.pi, p2, n)[1:-1]
    inner = np.column_stack([cb + rb * np.cos(tb), rb * np.sin(tb)])
    poly = np.vstack([outer, inner])
    return StarDomain(poly, center=np.array([-0.45, 0.0]))


def grid_mesh(x0, x1, y0, y1, nx, ny=None, keep=None) -> Triangulation:
    """Structured mesh of a rectangle; keep(cx, cy) filters cells."""
    if ny is None:
        ny = nx
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    vid = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    verts, tris = [], []

    def vertex(i, j):
        if vid[i, j] < 0:
            vid[i, j] = len(verts)
            verts.append((xs[i], ys[j]))
        return vid[i, j]

    for i in range(nx):
        for j in range(ny):
            cx = 0.5 * (xs[i] + xs[i + 1])
            cy = 0.5 * (ys[j] + ys[j + 1])
            if keep is not None and not keep(cx, cy):
                continue
            v00 = vertex(i, j)
            v10 = vertex(i + 1, j)
            v11 = vertex(i + 1, j + 1)
            v01 = vertex(i, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    if not tris:
        raise MeshError("grid mesh kept no cells")
    return Triangulation(np.array(verts, float), np.array(tris, np.int64), reorient=False)


def square_grid_mesh(a, b, n) -> Triangulation:
    return grid_mesh(a, b, a, b, n)


def lshape_mesh(n=8) -> Triangulation:
    return grid_mesh(-1, 1, -1, 1, n, n, keep=lambda cx, cy: not (cx > 0 and cy < 0))


def star_polygon_mesh(domain: StarDomain, rings: int = 5) -> Triangulation:
    """Quasi-uniform triangulation of a star-shaped polygon.

    Structured interior rings shrunk toward the center are connected by a
    Delaunay triangulation; triangles outside the polygon are dropped.  The
    outermost ring is the boundary polyline itself, so the mesh conforms to
    the domain exactly.
    """
    from scipy.spatial import Delaunay

    bnd = domain.boundary
    c = domain.center
    M = len(bnd)
    pts = [c]
    for r in range(1, rings):
        frac = r / rings
        mr = max(8, int(round(M * frac)))
        idx = np.linspace(0, M, mr, endpoint=False)
        ii = np.unique(np.floor(idx).astype(int) % M)
        ring = c + frac * (bnd[ii] - c)
        pts.append(ring)
    allpts = np.vstack([np.atleast_2d(p) for p in pts] + [bnd])
    dt = Delaunay(allpts)
    cent = allpts[dt.simplices].mean(axis=1)
    keep = points_in_polygon(cent[:, 0], cent[:, 1], bnd)
    tris = dt.simplices[keep]
    used = np.unique(tris)
    remap = -np.ones(len(allpts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    mesh = Triangulation(allpts[used], remap[tris])
    nb = sum(len(l) for l in mesh.boundary_loops)
    if len(mesh.boundary_loops) != 1 or nb != M:
        raise MeshError(
            "triangulation does not conform to the domain boundary; "
            "increase rings or refine the boundary polyline"
        )
    return mesh
