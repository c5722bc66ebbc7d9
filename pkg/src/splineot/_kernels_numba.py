"""Numba-jitted evaluation kernels (default backend, see kernels.py)."""

import os

import numpy as np
import numba
from numba import njit, prange

from ._tables import bernstein_values, block_size, reduction_chain
from ._kernels_numpy import build_bins  # one-time setup, no need to jit

_threads = os.environ.get("SPLINE_OT_THREADS")
if _threads:
    try:
        numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))
    except ValueError:
        pass

_BARY_TOL = 1e-12


@njit(cache=True)
def _locate_jit(px, py, tri_pts, x0, y0, inv_dx, inv_dy, nx, ny, ptr, items):
    P = px.shape[0]
    tri = np.full(P, -1, dtype=np.int64)
    bary = np.zeros((P, 3), dtype=np.float64)
    for p in range(P):
        cx = int((px[p] - x0) * inv_dx)
        if cx < 0:
            cx = 0
        elif cx >= nx:
            cx = nx - 1
        cy = int((py[p] - y0) * inv_dy)
        if cy < 0:
            cy = 0
        elif cy >= ny:
            cy = ny - 1
        c = cx * ny + cy
        for q in range(ptr[c], ptr[c + 1]):
            t = items[q]
            ax0 = tri_pts[t, 0, 0]
            ay0 = tri_pts[t, 0, 1]
            det = (tri_pts[t, 1, 0] - ax0) * (tri_pts[t, 2, 1] - ay0) - (
                tri_pts[t, 2, 0] - ax0
            ) * (tri_pts[t, 1, 1] - ay0)
            l2 = (
                (px[p] - ax0) * (tri_pts[t, 2, 1] - ay0)
                - (py[p] - ay0) * (tri_pts[t, 2, 0] - ax0)
            ) / det
            l3 = (
                (tri_pts[t, 1, 0] - ax0) * (py[p] - ay0)
                - (tri_pts[t, 1, 1] - ay0) * (px[p] - ax0)
            ) / det
            l1 = 1.0 - l2 - l3
            if l1 >= -_BARY_TOL and l2 >= -_BARY_TOL and l3 >= -_BARY_TOL:
                tri[p] = t
                bary[p, 0] = l1
                bary[p, 1] = l2
                bary[p, 2] = l3
                break
    return tri, bary


@njit(cache=True, inline="always")
def _reduce_step(c, w1, w2, w3, E1, E2, E3, base, n):
    # in place: E1[base+q] == q, the others point past q
    for q in range(n):
        c[q] = w1 * c[E1[base + q]] + w2 * c[E2[base + q]] + w3 * c[E3[base + q]]


@njit(cache=True, inline="always")
def _casteljau(c, b1, b2, b3, E1, E2, E3, OFF, d):
    for lvl in range(d, 0, -1):
        _reduce_step(c, b1, b2, b3, E1, E2, E3, OFF[lvl], lvl * (lvl + 1) // 2)
    return c[0]


@njit(cache=True, parallel=True)
def _eval_derivs_jit(C, tri, bary, grad_bary, E1, E2, E3, OFF, D, order):
    P = tri.shape[0]
    m = C.shape[1]
    m1 = D * (D + 1) // 2
    out = np.zeros((P, 6), dtype=np.float64)
    for p in prange(P):
        t = tri[p]
        if t < 0:
            continue
        b1 = bary[p, 0]
        b2 = bary[p, 1]
        b3 = bary[p, 2]
        blk = np.empty(m, dtype=np.float64)
        for q in range(m):
            blk[q] = C[t, q]
        if order >= 1:
            ax1 = grad_bary[t, 0, 0]
            ax2 = grad_bary[t, 1, 0]
            ax3 = grad_bary[t, 2, 0]
            ay1 = grad_bary[t, 0, 1]
            ay2 = grad_bary[t, 1, 1]
            ay3 = grad_bary[t, 2, 1]
            cx = np.empty(m1, dtype=np.float64)
            cy = np.empty(m1, dtype=np.float64)
            base = OFF[D]
            for q in range(m1):
                cx[q] = D * (
                    ax1 * blk[E1[base + q]] + ax2 * blk[E2[base + q]] + ax3 * blk[E3[base + q]]
                )
                cy[q] = D * (
                    ay1 * blk[E1[base + q]] + ay2 * blk[E2[base + q]] + ay3 * blk[E3[base + q]]
                )
            if order >= 2:
                m2 = (D - 1) * D // 2
                base1 = OFF[D - 1]
                cxx = np.empty(m2, dtype=np.float64)
                cxy = np.empty(m2, dtype=np.float64)
                cyy = np.empty(m2, dtype=np.float64)
                for q in range(m2):
                    cxx[q] = (D - 1) * (
                        ax1 * cx[E1[base1 + q]] + ax2 * cx[E2[base1 + q]] + ax3 * cx[E3[base1 + q]]
                    )
                    cxy[q] = (D - 1) * (
                        ay1 * cx[E1[base1 + q]] + ay2 * cx[E2[base1 + q]] + ay3 * cx[E3[base1 + q]]
                    )
                    cyy[q] = (D - 1) * (
                        ay1 * cy[E1[base1 + q]] + ay2 * cy[E2[base1 + q]] + ay3 * cy[E3[base1 + q]]
                    )
                out[p, 3] = _casteljau(cxx, b1, b2, b3, E1, E2, E3, OFF, D - 2)
                out[p, 4] = _casteljau(cxy, b1, b2, b3, E1, E2, E3, OFF, D - 2)
                out[p, 5] = _casteljau(cyy, b1, b2, b3, E1, E2, E3, OFF, D - 2)
            out[p, 1] = _casteljau(cx, b1, b2, b3, E1, E2, E3, OFF, D - 1)
            out[p, 2] = _casteljau(cy, b1, b2, b3, E1, E2, E3, OFF, D - 1)
        out[p, 0] = _casteljau(blk, b1, b2, b3, E1, E2, E3, OFF, D)
    return out


@njit(cache=True)
def _unreduce_jit(w0, tri, grad_bary, E1, E2, E3, OFF, D, dx, dy):
    P = w0.shape[0]
    n = dx + dy
    m = (D + 1) * (D + 2) // 2
    out = np.zeros((P, m), dtype=np.float64)
    fac = 1.0
    for lvl in range(D - n + 1, D + 1):
        fac *= lvl
    buf = np.zeros(m, dtype=np.float64)
    cur = np.zeros(m, dtype=np.float64)
    for p in range(P):
        t = tri[p]
        nlo = (D - n + 1) * (D - n + 2) // 2
        for q in range(nlo):
            cur[q] = w0[p, q]
        step = 0
        for lvl in range(D - n + 1, D + 1):
            if step < dx:
                a1 = grad_bary[t, 0, 0]
                a2 = grad_bary[t, 1, 0]
                a3 = grad_bary[t, 2, 0]
            else:
                a1 = grad_bary[t, 0, 1]
                a2 = grad_bary[t, 1, 1]
                a3 = grad_bary[t, 2, 1]
            nhi = (lvl + 1) * (lvl + 2) // 2
            nlo = lvl * (lvl + 1) // 2
            base = OFF[lvl]
            for q in range(nhi):
                buf[q] = 0.0
            for q in range(nlo):
                v = cur[q]
                buf[E1[base + q]] += a1 * v
                buf[E2[base + q]] += a2 * v
                buf[E3[base + q]] += a3 * v
            for q in range(nhi):
                cur[q] = buf[q]
            step += 1
        for q in range(m):
            out[p, q] = fac * cur[q]
    return out


@njit(cache=True)
def _splat_jit(vals, ix, iy, width, height):
    acc = np.zeros((height, width), dtype=np.float64)
    cnt = np.zeros((height, width), dtype=np.int64)
    for p in range(vals.shape[0]):
        acc[iy[p], ix[p]] += vals[p]
        cnt[iy[p], ix[p]] += 1
    return acc, cnt


def locate_points(px, py, tri_pts, bins):
    px = np.ascontiguousarray(px, dtype=np.float64).ravel()
    py = np.ascontiguousarray(py, dtype=np.float64).ravel()
    x0, y0, inv_dx, inv_dy, nx, ny, ptr, items = bins
    return _locate_jit(px, py, tri_pts, x0, y0, inv_dx, inv_dy, nx, ny, ptr, items)


def eval_derivs(coeffs, tri, bary, grad_bary, D, order):
    m = block_size(D)
    C = np.ascontiguousarray(coeffs, dtype=np.float64).reshape(-1, m)
    E1, E2, E3, OFF = reduction_chain(D)
    return _eval_derivs_jit(
        C,
        np.ascontiguousarray(tri, dtype=np.int64).ravel(),
        np.ascontiguousarray(bary, dtype=np.float64).reshape(-1, 3),
        grad_bary,
        E1,
        E2,
        E3,
        OFF,
        D,
        order,
    )


def basis_rows(tri, bary, grad_bary, D, dx, dy):
    tri = np.ascontiguousarray(tri, dtype=np.int64).ravel()
    bary = np.ascontiguousarray(bary, dtype=np.float64).reshape(-1, 3)
    w0 = bernstein_values(D - dx - dy, bary)
    E1, E2, E3, OFF = reduction_chain(D)
    return _unreduce_jit(np.ascontiguousarray(w0), tri, grad_bary, E1, E2, E3, OFF, D, dx, dy)


def splat_accumulate(vals, ix, iy, width, height):
    return _splat_jit(
        np.ascontiguousarray(vals, dtype=np.float64).ravel(),
        np.ascontiguousarray(ix, dtype=np.int64).ravel(),
        np.ascontiguousarray(iy, dtype=np.int64).ravel(),
        width,
        height,
    )
