"""Density functions for the transport problems.

A Density wraps a vectorized callable with the positive lower/upper bounds
the iteration diagnostics rely on.  Analytic families used by the benchmark
problems live here; image-backed densities are built in imaging.py.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np


class DensityRangeError(ValueError):
    pass


@dataclass
class Density:
    fn: Callable
    lower: float
    upper: float
    label: str = ""

    def __call__(self, x, y):
        return np.asarray(self.fn(np.asarray(x, float), np.asarray(y, float)), float)


def constant_density(v: float) -> Density:
    v = float(v)
    if v <= 0:
        raise ValueError("constant density must be positive")
    return Density(lambda x, y: np.full(np.broadcast(x, y).shape, v), v, v, f"const:{v}")


def sampled_bounds(fn, bbox, n: int = 201, dilate: float = 0.05):
    """Conservative min/max of fn over a dilated bounding box."""
    (x0, x1), (y0, y1) = bbox
    mx = dilate * (x1 - x0)
    my = dilate * (y1 - y0)
    xs = np.linspace(x0 - mx, x1 + mx, n)
    ys = np.linspace(y0 - my, y1 + my, n)
    X, Y = np.meshgrid(xs, ys)
    v = np.asarray(fn(X, Y), float)
    return float(v.min()), float(v.max())


def density_from_function(fn, bbox, label: str = "") -> Density:
    lo, hi = sampled_bounds(fn, bbox)
    return Density(fn, lo, hi, label)


def gaussian_density(a: float, b: float, t: float, s: float) -> Callable:
    """exp(a (x-t)^2 + b (y-s)^2); a, b may be negative for bumps."""

    def fn(x, y):
        return np.exp(a * (x - t) ** 2 + b * (y - s) ** 2)

    return fn


# --- oscillatory benchmark family ------------------------------------------
# q(z) = (-z^2/(8 pi) + 1/(256 pi^3) + 1/(32 pi)) cos(8 pi z)
#        + z sin(8 pi z)/(32 pi^2),  with q'(z) = (z^2 - 1/4) sin(8 pi z)

_PI = np.pi
_QC = 1.0 / (256 * _PI**3) + 1.0 / (32 * _PI)


def bfo_q(z):
    z = np.asarray(z, float)
    return (-(z**2) / (8 * _PI) + _QC) * np.cos(8 * _PI * z) + z * np.sin(8 * _PI * z) / (
        32 * _PI**2
    )


def bfo_qp(z):
    z = np.asarray(z, float)
    return (z**2 - 0.25) * np.sin(8 * _PI * z)


def bfo_qpp(z):
    z = np.asarray(z, float)
    return 2 * z * np.sin(8 * _PI * z) + 8 * _PI * (z**2 - 0.25) * np.cos(8 * _PI * z)


def bfo_density(x, y):
    qx, qy = bfo_q(x), bfo_q(y)
    px, py = bfo_qp(x), bfo_qp(y)
    sx, sy = bfo_qpp(x), bfo_qpp(y)
    return 1.0 + 4.0 * (sx * qy + qx * sy) + 16.0 * (qx * qy * sx * sy - px**2 * py**2)


def bfo_exact_map(x, y):
    """Gradient of the exact potential for the oscillatory problem."""
    gx = x + 4.0 * bfo_qp(x) * bfo_q(y)
    gy = y + 4.0 * bfo_q(x) * bfo_qp(y)
    return gx, gy


def corner_gaussians(x, y):
    """2 + 25 exp(-12.5 |p - c|^2) with c the nearest corner of [-1,1]^2."""
    cx = np.where(np.asarray(x, float) < 0, -1.0, 1.0)
    cy = np.where(np.asarray(y, float) < 0, -1.0, 1.0)
    return 2.0 + 25.0 * np.exp(-12.5 * ((x - cx) ** 2 + (y - cy) ** 2))


def center_gaussian(x, y):
    return 2.0 + 25.0 * np.exp(-12.5 * (np.asarray(x, float) ** 2 + np.asarray(y, float) ** 2))


@dataclass
class DensityPair:
    """Source density f over V and target density g over W.

    g must be strictly positive with finite upper bound; f may touch zero
    (Dirichlet-only problems), in which case the transport driver rejects it.
    """

    f: Density
    g: Density

    def __post_init__(self):
        if self.g.lower <= 0:
            raise ValueError("target density must have a positive lower bound")
        if self.f.lower < 0:
            raise ValueError("source density lower bound must be >= 0")

    @property
    def floor_sq(self) -> float:
        """Theoretical lower bound of the squared update: 4 f0 / g_max."""
        return 4.0 * self.f.lower / self.g.upper

    def ratio(self, pts: np.ndarray, grads: np.ndarray) -> np.ndarray:
        """f(x) / g(grad u(x)) with a range check on the g values."""
        fv = self.f(pts[:, 0], pts[:, 1])
        gv = self.g(grads[:, 0], grads[:, 1])
        lo = self.g.lower * (1 - 1e-6) - 1e-12
        hi = self.g.upper * (1 + 1e-6) + 1e-12
        if gv.min() < lo or gv.max() > hi:
            raise DensityRangeError(
                f"g(grad u) range [{gv.min():.6g}, {gv.max():.6g}] outside "
                f"[{self.g.lower:.6g}, {self.g.upper:.6g}]"
            )
        return fv / gv
