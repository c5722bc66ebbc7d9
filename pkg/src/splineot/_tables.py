"""Index tables for the triangular Bernstein basis.

Coefficients of a degree-d polynomial patch are stored in a fixed canonical
order: multi-indices (i, j, k) with i + j + k = d, sorted by decreasing i,
then decreasing j.  All evaluation and assembly kernels share these tables.
"""

from functools import lru_cache
from math import factorial

import numpy as np


def block_size(d: int) -> int:
    """Number of Bernstein coefficients of a degree-d triangle patch."""
    return (d + 1) * (d + 2) // 2


def lattice_index(d: int, i: int, j: int, k: int) -> int:
    """Position of multi-index (i, j, k), i+j+k=d, in the canonical order."""
    lvl = d - i
    return lvl * (lvl + 1) // 2 + k


@lru_cache(maxsize=64)
def lattice_multiindices(d: int) -> np.ndarray:
    """(n_d, 3) int array of multi-indices in canonical order."""
    out = np.empty((block_size(d), 3), dtype=np.int64)
    pos = 0
    for i in range(d, -1, -1):
        for j in range(d - i, -1, -1):
            out[pos] = (i, j, d - i - j)
            pos += 1
    return out


@lru_cache(maxsize=64)
def multinomials(d: int) -> np.ndarray:
    """d!/(i! j! k!) for each multi-index, canonical order."""
    idx = lattice_multiindices(d)
    fd = factorial(d)
    out = np.empty(len(idx), dtype=np.float64)
    for p, (i, j, k) in enumerate(idx):
        out[p] = fd / (factorial(int(i)) * factorial(int(j)) * factorial(int(k)))
    return out


@lru_cache(maxsize=64)
def reduction_table(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index maps from level d-1 to level d.

    For each beta with |beta| = d-1, entries give the canonical positions of
    beta+e1, beta+e2, beta+e3 at level d.  One de Casteljau / directional
    derivative step is then new[b] = w1*c[E1[b]] + w2*c[E2[b]] + w3*c[E3[b]].
    """
    n = block_size(d - 1)
    e1 = np.empty(n, dtype=np.int64)
    e2 = np.empty(n, dtype=np.int64)
    e3 = np.empty(n, dtype=np.int64)
    for p, (i, j, k) in enumerate(lattice_multiindices(d - 1)):
        e1[p] = lattice_index(d, int(i) + 1, int(j), int(k))
        e2[p] = lattice_index(d, int(i), int(j) + 1, int(k))
        e3[p] = lattice_index(d, int(i), int(j), int(k) + 1)
    return e1, e2, e3


@lru_cache(maxsize=64)
def reduction_chain(D: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Concatenated reduction tables for levels 1..D, for the jit kernels.

    Returns (E1, E2, E3, OFF) where the table for level d occupies
    [OFF[d], OFF[d] + block_size(d-1)).  OFF has length D+2.
    """
    e1s, e2s, e3s = [], [], []
    off = np.zeros(D + 2, dtype=np.int64)
    for d in range(1, D + 1):
        a, b, c = reduction_table(d)
        e1s.append(a)
        e2s.append(b)
        e3s.append(c)
        off[d + 1] = off[d] + len(a) if d >= 1 else 0
    # off[d] = start of level-d table; level d table length = block_size(d-1)
    off = np.zeros(D + 2, dtype=np.int64)
    pos = 0
    for d in range(1, D + 1):
        off[d] = pos
        pos += block_size(d - 1)
    off[D + 1] = pos
    return (
        np.concatenate(e1s) if e1s else np.zeros(0, np.int64),
        np.concatenate(e2s) if e2s else np.zeros(0, np.int64),
        np.concatenate(e3s) if e3s else np.zeros(0, np.int64),
        off,
    )


@lru_cache(maxsize=64)
def exponent_arrays(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(i, j, k) exponent vectors of the degree-d basis, canonical order."""
    idx = lattice_multiindices(d)
    return (
        idx[:, 0].astype(np.float64),
        idx[:, 1].astype(np.float64),
        idx[:, 2].astype(np.float64),
    )


def bernstein_values(d: int, bary: np.ndarray) -> np.ndarray:
    """Values of all degree-d Bernstein basis polynomials.

    bary: (..., 3) barycentric coordinates.  Returns (..., n_d).
    """
    bi, bj, bk = exponent_arrays(d)
    mult = multinomials(d)
    b = np.asarray(bary, dtype=np.float64)
    b1 = b[..., 0:1]
    b2 = b[..., 1:2]
    b3 = b[..., 2:3]
    return mult * np.power(b1, bi) * np.power(b2, bj) * np.power(b3, bk)
