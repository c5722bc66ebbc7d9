"""Vectorized numpy implementations of the evaluation kernels.

This is the fallback backend (see kernels.py); the numba backend mirrors the
same signatures.  Points are processed in chunks to bound memory.
"""

import numpy as np

from ._tables import bernstein_values, block_size, reduction_table

_CHUNK = 32768
_BARY_TOL = 1e-12


def build_bins(tri_pts: np.ndarray, cells_hint: int = 0):
    """Uniform-grid spatial index over triangle bounding boxes.

    tri_pts: (T, 3, 2).  Returns a tuple of plain arrays shared by both
    backends: (x0, y0, inv_dx, inv_dy, nx, ny, ptr, items).
    """
    T = tri_pts.shape[0]
    xmin = tri_pts[:, :, 0].min(axis=1)
    xmax = tri_pts[:, :, 0].max(axis=1)
    ymin = tri_pts[:, :, 1].min(axis=1)
    ymax = tri_pts[:, :, 1].max(axis=1)
    gx0, gx1 = xmin.min(), xmax.max()
    gy0, gy1 = ymin.min(), ymax.max()
    n = max(1, cells_hint) if cells_hint else max(1, int(np.sqrt(2.0 * T)))
    wx = max(gx1 - gx0, 1e-300)
    wy = max(gy1 - gy0, 1e-300)
    nx = max(1, int(round(n * np.sqrt(wx / wy))))
    ny = max(1, int(round(n * np.sqrt(wy / wx))))
    inv_dx = nx / wx
    inv_dy = ny / wy
    ix0 = np.clip(((xmin - gx0) * inv_dx).astype(np.int64), 0, nx - 1)
    ix1 = np.clip(((xmax - gx0) * inv_dx).astype(np.int64), 0, nx - 1)
    iy0 = np.clip(((ymin - gy0) * inv_dy).astype(np.int64), 0, ny - 1)
    iy1 = np.clip(((ymax - gy0) * inv_dy).astype(np.int64), 0, ny - 1)
    cells = [[] for _ in range(nx * ny)]
    for t in range(T):
        for cx in range(ix0[t], ix1[t] + 1):
            for cy in range(iy0[t], iy1[t] + 1):
                cells[cx * ny + cy].append(t)
    ptr = np.zeros(nx * ny + 1, dtype=np.int64)
    for c, lst in enumerate(cells):
        ptr[c + 1] = ptr[c] + len(lst)
    items = np.empty(ptr[-1], dtype=np.int64)
    for c, lst in enumerate(cells):
        items[ptr[c]:ptr[c + 1]] = lst  # ascending triangle index per cell
    return (float(gx0), float(gy0), float(inv_dx), float(inv_dy), nx, ny, ptr, items)


def _bary_of(px, py, v):
    """Barycentric coordinates of points w.r.t. one triangle v: (3, 2)."""
    det = (v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - (v[2, 0] - v[0, 0]) * (v[1, 1] - v[0, 1])
    l2 = ((px - v[0, 0]) * (v[2, 1] - v[0, 1]) - (py - v[0, 1]) * (v[2, 0] - v[0, 0])) / det
    l3 = ((v[1, 0] - v[0, 0]) * (py - v[0, 1]) - (v[1, 1] - v[0, 1]) * (px - v[0, 0])) / det
    return 1.0 - l2 - l3, l2, l3


def locate_points(px, py, tri_pts, bins):
    """Find the containing triangle (lowest index wins) and barycentrics.

    Returns (tri, bary); tri = -1 for points outside the mesh.
    """
    px = np.ascontiguousarray(px, dtype=np.float64).ravel()
    py = np.ascontiguousarray(py, dtype=np.float64).ravel()
    x0, y0, inv_dx, inv_dy, nx, ny, ptr, items = bins
    P = px.size
    tri = np.full(P, -1, dtype=np.int64)
    bary = np.zeros((P, 3), dtype=np.float64)
    cx = np.clip(((px - x0) * inv_dx).astype(np.int64), 0, nx - 1)
    cy = np.clip(((py - y0) * inv_dy).astype(np.int64), 0, ny - 1)
    cell = cx * ny + cy
    order = np.argsort(cell, kind="stable")
    sorted_cells = cell[order]
    starts = np.flatnonzero(np.r_[True, sorted_cells[1:] != sorted_cells[:-1]])
    starts = np.r_[starts, P]
    for s, e in zip(starts[:-1], starts[1:]):
        c = sorted_cells[s]
        cand = items[ptr[c]:ptr[c + 1]]
        if len(cand) == 0:
            continue
        pidx = order[s:e]
        live = np.ones(len(pidx), dtype=bool)
        lx, ly = px[pidx], py[pidx]
        for t in cand:
            if not live.any():
                break
            l1, l2, l3 = _bary_of(lx[live], ly[live], tri_pts[t])
            ok = (l1 >= -_BARY_TOL) & (l2 >= -_BARY_TOL) & (l3 >= -_BARY_TOL)
            if ok.any():
                sel = pidx[live][ok]
                tri[sel] = t
                bary[sel, 0] = l1[ok]
                bary[sel, 1] = l2[ok]
                bary[sel, 2] = l3[ok]
                nl = live.copy()
                nl[np.flatnonzero(live)[ok]] = False
                live = nl
    return tri, bary


def _reduce(c, w, d):
    """One coefficient-reduction step at level d: (P, n_d) -> (P, n_{d-1})."""
    e1, e2, e3 = reduction_table(d)
    return w[:, 0:1] * c[:, e1] + w[:, 1:2] * c[:, e2] + w[:, 2:3] * c[:, e3]


def _casteljau(c, bary, d):
    for lvl in range(d, 0, -1):
        c = _reduce(c, bary, lvl)
    return c[:, 0]


def eval_derivs(coeffs, tri, bary, grad_bary, D, order):
    """Evaluate a B-form and its derivatives at located points.

    Returns (P, 6): columns val, gx, gy, hxx, hxy, hyy (zeros beyond order).
    """
    m = block_size(D)
    C = np.asarray(coeffs, dtype=np.float64).reshape(-1, m)
    tri = np.asarray(tri, dtype=np.int64).ravel()
    bary = np.asarray(bary, dtype=np.float64).reshape(-1, 3)
    P = tri.size
    out = np.zeros((P, 6), dtype=np.float64)
    for s in range(0, P, _CHUNK):
        e = min(P, s + _CHUNK)
        tr = tri[s:e]
        b = bary[s:e]
        blk = C[tr]
        out[s:e, 0] = _casteljau(blk, b, D)
        if order >= 1:
            ax = grad_bary[tr, :, 0]
            ay = grad_bary[tr, :, 1]
            cx = D * _reduce(blk, ax, D)
            cy = D * _reduce(blk, ay, D)
            out[s:e, 1] = _casteljau(cx, b, D - 1)
            out[s:e, 2] = _casteljau(cy, b, D - 1)
            if order >= 2:
                cxx = (D - 1) * _reduce(cx, ax, D - 1)
                cxy = (D - 1) * _reduce(cx, ay, D - 1)
                cyy = (D - 1) * _reduce(cy, ay, D - 1)
                out[s:e, 3] = _casteljau(cxx, b, D - 2)
                out[s:e, 4] = _casteljau(cxy, b, D - 2)
                out[s:e, 5] = _casteljau(cyy, b, D - 2)
    return out


def basis_rows(tri, bary, grad_bary, D, dx, dy):
    """Dense rows of the derivative functional on the owning block.

    Row p applied to a block's coefficients gives d^dx_x d^dy_y s at point p.
    Returns (P, m).
    """
    tri = np.asarray(tri, dtype=np.int64).ravel()
    bary = np.asarray(bary, dtype=np.float64).reshape(-1, 3)
    n = dx + dy
    w = bernstein_values(D - n, bary)
    dirs = []
    if dx:
        ax = grad_bary[tri, :, 0]
        dirs += [ax] * dx
    if dy:
        ay = grad_bary[tri, :, 1]
        dirs += [ay] * dy
    fac = 1.0
    for step, lvl in enumerate(range(D - n + 1, D + 1)):
        a = dirs[step]
        e1, e2, e3 = reduction_table(lvl)
        r = np.zeros((len(tri), block_size(lvl)), dtype=np.float64)
        r[:, e1] += a[:, 0:1] * w
        r[:, e2] += a[:, 1:2] * w
        r[:, e3] += a[:, 2:3] * w
        w = r
        fac *= lvl
    return w * fac


def splat_accumulate(vals, ix, iy, width, height):
    """Sum values and counts into a (height, width) accumulation raster."""
    acc = np.zeros((height, width), dtype=np.float64)
    cnt = np.zeros((height, width), dtype=np.int64)
    np.add.at(acc, (iy, ix), vals)
    np.add.at(cnt, (iy, ix), 1)
    return acc, cnt
