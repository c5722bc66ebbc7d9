"""Raster images as densities and forward warping through a gradient map.

PGM/PPM (P2/P3/P5/P6) in and out; source pixels are splatted at their mapped
positions and averaged, remaining holes inside the target domain are closed
by neighbour averaging.
"""

import re
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import kernels
from .bbspline import BForm
from .densities import Density
from .mesh import StarDomain


class PNMError(ValueError):
    pass


class MapQualityError(RuntimeError):
    pass


@dataclass(frozen=True)
class GeoFrame:
    """Affine pixel-center <-> domain map; rows run top-down (sy < 0)."""

    x0: float
    y0: float
    sx: float
    sy: float

    @classmethod
    def over_bbox(cls, x0, x1, y0, y1, width, height) -> "GeoFrame":
        return cls(x0, y1, (x1 - x0) / width, -(y1 - y0) / height)

    def pixel_to_domain(self, col, row):
        return self.x0 + (np.asarray(col, float) + 0.5) * self.sx, self.y0 + (
            np.asarray(row, float) + 0.5
        ) * self.sy

    def domain_to_pixel(self, x, y):
        return (np.asarray(x, float) - self.x0) / self.sx - 0.5, (
            np.asarray(y, float) - self.y0
        ) / self.sy - 0.5


@dataclass
class RasterImage:
    samples: np.ndarray  # (H, W) gray or (H, W, 3) rgb, values in [0, 1]
    geo: Optional[GeoFrame] = None

    def __post_init__(self):
        s = np.asarray(self.samples, float)
        if s.ndim not in (2, 3) or (s.ndim == 3 and s.shape[2] != 3):
            raise ValueError("samples must be (H, W) or (H, W, 3)")
        self.samples = s

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 2 else 3

    def with_frame(self, x0, x1, y0, y1) -> "RasterImage":
        return RasterImage(self.samples,
                           GeoFrame.over_bbox(x0, x1, y0, y1, self.width, self.height))

    def luminance(self) -> np.ndarray:
        if self.channels == 1:
            return self.samples
        r, g, b = self.samples[..., 0], self.samples[..., 1], self.samples[..., 2]
        return 0.2126 * r + 0.7152 * g + 0.0722 * b


def read_pnm(src: Union[str, bytes]) -> RasterImage:
    """Parse P2/P3 (ASCII) or P5/P6 (binary) with maxval <= 65535."""
    data = src if isinstance(src, bytes) else open(src, "rb").read()
    pos = 0

    def token():
        nonlocal pos
        while True:
            m = re.match(rb"\s*(#[^\n]*\n)?", data[pos:])
            pos += m.end()
            if pos >= len(data):
                raise PNMError("truncated header")
            if data[pos:pos + 1] == b"#":
                nl = data.find(b"\n", pos)
                if nl < 0:
                    raise PNMError("truncated header comment")
                pos = nl + 1
                continue
            m = re.match(rb"\S+", data[pos:])
            if not m:
                raise PNMError("truncated header")
            pos += m.end()
            return data[pos - m.end():pos]

    magic = token()
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise PNMError(f"unsupported magic {magic!r}")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as e:
        raise PNMError(f"malformed header: {e}") from None
    if maxval <= 0 or maxval > 65535:
        raise PNMError(f"maxval {maxval} out of range 1..65535")
    channels = 3 if magic in (b"P3", b"P6") else 1
    count = width * height * channels
    if magic in (b"P2", b"P3"):
        body = data[pos:].split()
        if len(body) < count:
            raise PNMError(f"expected {count} samples, found {len(body)}")
        vals = np.array(body[:count], dtype=np.float64)
    else:
        pos += 1  # single whitespace after maxval
        wide = maxval > 255
        need = count * (2 if wide else 1)
        raw = data[pos:pos + need]
        if len(raw) < need:
            raise PNMError(f"truncated payload: expected {need} bytes, found {len(raw)}")
        dt = ">u2" if wide else "u1"
        vals = np.frombuffer(raw, dtype=dt).astype(np.float64)
    vals /= maxval
    shape = (height, width) if channels == 1 else (height, width, 3)
    return RasterImage(vals.reshape(shape))


def write_pnm(img: RasterImage, path: Optional[str] = None, maxval: int = 255,
              binary: bool = True) -> bytes:
    if maxval <= 0 or maxval > 65535:
        raise PNMError(f"maxval {maxval} out of range 1..65535")
    q = np.clip(np.rint(img.samples * maxval), 0, maxval)
    if img.channels == 1:
        magic = b"P5" if binary else b"P2"
    else:
        magic = b"P6" if binary else b"P3"
    head = b"%s\n%d %d\n%d\n" % (magic, img.width, img.height, maxval)
    if binary:
        dt = ">u2" if maxval > 255 else "u1"
        payload = q.astype(dt).tobytes()
    else:
        payload = b" ".join(b"%d" % v for v in q.astype(np.int64).ravel()) + b"\n"
    out = head + payload
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(out)
    return out


def density_from_image(img: RasterImage, floor: float, domain: StarDomain) -> Density:
    """Bilinear image density over the domain, floored at a positive value."""
    if floor <= 0:
        raise ValueError("floor must be positive")
    if img.geo is None:
        b = domain.boundary
        img = img.with_frame(b[:, 0].min(), b[:, 0].max(), b[:, 1].min(), b[:, 1].max())
    lum = img.luminance()
    H, W = lum.shape
    geo = img.geo

    def fn(x, y):
        col, row = geo.domain_to_pixel(x, y)
        c0 = np.clip(np.floor(col), 0, W - 1).astype(int)
        r0 = np.clip(np.floor(row), 0, H - 1).astype(int)
        c1 = np.minimum(c0 + 1, W - 1)
        r1 = np.minimum(r0 + 1, H - 1)
        tc = np.clip(col - c0, 0.0, 1.0)
        tr = np.clip(row - r0, 0.0, 1.0)
        v = (
            lum[r0, c0] * (1 - tr) * (1 - tc)
            + lum[r0, c1] * (1 - tr) * tc
            + lum[r1, c0] * tr * (1 - tc)
            + lum[r1, c1] * tr * tc
        )
        return np.maximum(v, floor)

    return Density(fn, floor, max(floor, float(lum.max())), "image")


def fill_holes(acc: np.ndarray, cnt: np.ndarray, inside: np.ndarray,
               max_passes: int = 20, hole_tol: float = 1e-3):
    """Average-of-filled-neighbours passes until few holes remain.

    Works on (H, W) or (H, W, C) accumulators with a shared count raster.
    Returns (filled samples, passes used, holes left).
    """
    filled = cnt > 0
    multi = acc.ndim == 3
    out = np.where(filled[..., None] if multi else filled, acc / np.maximum(cnt, 1)[..., None]
                   if multi else acc / np.maximum(cnt, 1), 0.0)
    target = inside & ~filled
    n_inside = max(1, int(inside.sum()))
    passes = 0
    while passes < max_passes and target.sum() > hole_tol * n_inside:
        pad_v = np.pad(out, ((1, 1), (1, 1), (0, 0)) if multi else 1, mode="edge")
        pad_f = np.pad(filled, 1, mode="constant")
        s = np.zeros_like(out)
        c = np.zeros(out.shape[:2])
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                fslice = pad_f[1 + dy:1 + dy + out.shape[0], 1 + dx:1 + dx + out.shape[1]]
                vslice = pad_v[1 + dy:1 + dy + out.shape[0], 1 + dx:1 + dx + out.shape[1]]
                if multi:
                    s += vslice * fslice[..., None]
                else:
                    s += vslice * fslice
                c += fslice
        can = target & (c > 0)
        if not can.any():
            break
        if multi:
            out[can] = s[can] / c[can][:, None]
        else:
            out[can] = s[can] / c[can]
        filled = filled | can
        target = inside & ~filled
        passes += 1
    return out, passes, int(target.sum())


def forward_warp(img: RasterImage, u: BForm, target: StarDomain,
                 out_resolution: Union[int, tuple] = 256,
                 max_outside: float = 0.05):
    """Push the image through grad u onto the target domain.

    Every source pixel inside the mesh splats its value at the pixel of the
    target raster containing grad u(x); collisions average.  Returns
    (RasterImage over the target bbox, stats dict).
    """
    if img.geo is None:
        raise ValueError("source image needs a geo frame (use with_frame)")
    space = u.space
    H, W = img.height, img.width
    cols, rows = np.meshgrid(np.arange(W), np.arange(H))
    x, y = img.geo.pixel_to_domain(cols.ravel(), rows.ravel())
    tri, bary = space.locate(np.column_stack([x, y]))
    ins = tri >= 0
    grads = space.eval_located(u.coeffs, tri[ins], bary[ins], order=1)[:, 1:3]

    b = target.boundary
    tx0, tx1 = b[:, 0].min(), b[:, 0].max()
    ty0, ty1 = b[:, 1].min(), b[:, 1].max()
    if isinstance(out_resolution, int):
        ow = out_resolution
        oh = max(1, int(round(out_resolution * (ty1 - ty0) / (tx1 - tx0))))
    else:
        ow, oh = out_resolution
    geo = GeoFrame.over_bbox(tx0, tx1, ty0, ty1, ow, oh)

    fc, fr = geo.domain_to_pixel(grads[:, 0], grads[:, 1])
    ix = np.rint(fc).astype(np.int64)
    iy = np.rint(fr).astype(np.int64)
    ok = (ix >= 0) & (ix < ow) & (iy >= 0) & (iy < oh)
    frac_out = 1.0 - ok.mean() if len(ok) else 1.0
    if frac_out > max_outside:
        raise MapQualityError(
            f"{100 * frac_out:.1f}% of mapped pixels fall outside the target raster"
        )

    if img.channels == 1:
        vals = img.samples.ravel()[ins][ok]
        acc, cnt = kernels.splat_accumulate(vals, ix[ok], iy[ok], ow, oh)
    else:
        cnt = None
        planes = []
        for ch in range(3):
            vals = img.samples[..., ch].ravel()[ins][ok]
            a, cnt = kernels.splat_accumulate(vals, ix[ok], iy[ok], ow, oh)
            planes.append(a)
        acc = np.stack(planes, axis=-1)

    pc, pr = np.meshgrid(np.arange(ow), np.arange(oh))
    gx, gy = geo.pixel_to_domain(pc.ravel(), pr.ravel())
    inside = target.contains(gx, gy).reshape(oh, ow)
    covered = float((cnt[inside] > 0).mean()) if inside.any() else 0.0

    out, passes, holes = fill_holes(acc, cnt, inside)
    out[~inside] = 0.0
    stats = {
        "coverage_pre_fill": covered,
        "fill_passes": passes,
        "holes_left": holes,
        "outside_fraction": float(frac_out),
        "splatted": int(ok.sum()),
    }
    return RasterImage(out, geo), stats


def psnr(a: RasterImage, b: RasterImage) -> float:
    if a.samples.shape != b.samples.shape:
        raise ValueError("image shapes differ")
    mse = float(np.mean((a.samples - b.samples) ** 2))
    if mse == 0:
        return float("inf")
    return -10.0 * np.log10(mse)


def parse_density_descriptor(desc: str, domain: Optional[StarDomain] = None) -> Density:
    """Mini-language: const:v | gauss:a,b,t,s | image:path,floor | builtin:name."""
    from . import densities as dn

    kind, _, rest = desc.partition(":")
    kind = kind.strip().lower()
    if kind == "const":
        return dn.constant_density(float(rest))
    if kind == "gauss":
        a, b, t, s = (float(v) for v in rest.split(","))
        fn = dn.gaussian_density(a, b, t, s)
        if domain is None:
            raise ValueError("gauss density needs a domain for its bounds")
        bx = domain.boundary
        return dn.density_from_function(
            fn, ((bx[:, 0].min(), bx[:, 0].max()), (bx[:, 1].min(), bx[:, 1].max())),
            label=desc)
    if kind == "image":
        path, _, floor = rest.rpartition(",")
        if domain is None:
            raise ValueError("image density needs a domain")
        return density_from_image(read_pnm(path), float(floor), domain)
    if kind == "builtin":
        name = rest.strip().lower()
        if name == "bfo-q":
            return Density(dn.bfo_density, 0.55, 1.54, desc)
        if name == "corner-gaussians":
            return Density(dn.corner_gaussians, 2.0, 27.0, desc)
        if name == "center-gaussian":
            return Density(dn.center_gaussian, 2.0, 27.0, desc)
        raise ValueError(f"unknown builtin density {name!r}")
    raise ValueError(f"cannot parse density descriptor {desc!r}")
