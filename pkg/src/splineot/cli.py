"""Command-line driver: poisson / mae / ot / warp / bench subcommands."""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .assembly import mae_residual
from .bbspline import SplineSpace, bform_from_json, bform_to_json
from .densities import Density, DensityPair, constant_density
from .imaging import (
    MapQualityError,
    PNMError,
    forward_warp,
    parse_density_descriptor,
    read_pnm,
    write_pnm,
)
from .lsq import InfeasibleError
from .mae import BlowupError, SubharmonicConfig, iteration_diagnostics, poisson_solve, subharmonic_solve
from .mesh import MeshError, StarDomain, StarShapeError, Triangulation, parse_mesh
from .shapes import (
    disk_domain,
    grid_mesh,
    lshape_domain,
    lshape_mesh,
    moon_domain,
    oval_domain,
    rect_domain,
    square_grid_mesh,
    star_polygon_mesh,
)
from .transport import TransportConfig, solve_ot

_ERRORS = (MeshError, StarShapeError, InfeasibleError, BlowupError, PNMError,
           MapQualityError, ValueError, FileNotFoundError)


def fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def parse_domain(desc: str) -> StarDomain:
    kind, _, rest = desc.partition(":")
    kind = kind.strip().lower()
    if kind == "square":
        a, b = (float(v) for v in rest.split(","))
        return rect_domain(a, b, a, b)
    if kind == "rect":
        x0, x1, y0, y1 = (float(v) for v in rest.split(","))
        return rect_domain(x0, x1, y0, y1)
    if kind == "disk":
        vals = [float(v) for v in rest.split(",")] if rest else []
        r = vals[0] if vals else 1.0
        n = int(vals[1]) if len(vals) > 1 else 64
        return disk_domain(0.0, 0.0, r, n)
    if kind == "lshape":
        return lshape_domain()
    if kind == "moon":
        return moon_domain()
    if kind == "oval":
        vals = [float(v) for v in rest.split(",")] if rest else [1.0, 0.6]
        n = int(vals[2]) if len(vals) > 2 else 64
        return oval_domain(vals[0], vals[1], n)
    path = Path(desc)
    if path.exists():
        pts = np.loadtxt(path, ndmin=2)
        return StarDomain(pts[:, :2])
    raise ValueError(f"cannot parse domain descriptor {desc!r}")


def build_mesh(desc: str, domain: StarDomain) -> Triangulation:
    kind, _, rest = desc.partition(":")
    kind = kind.strip().lower()
    if kind == "grid":
        n = int(rest)
        b = domain.boundary
        x0, x1 = b[:, 0].min(), b[:, 0].max()
        y0, y1 = b[:, 1].min(), b[:, 1].max()
        corners = {(round(x, 12), round(y, 12)) for x, y in b}
        if corners == {(round(x0, 12), round(y0, 12)), (round(x1, 12), round(y0, 12)),
                       (round(x1, 12), round(y1, 12)), (round(x0, 12), round(y1, 12))}:
            return grid_mesh(x0, x1, y0, y1, n)
        # clipped grid for polygonal (e.g. L-shaped) domains
        return grid_mesh(x0, x1, y0, y1, n, keep=lambda cx, cy: bool(domain.contains(cx, cy)[0]))
    if kind == "rings":
        return star_polygon_mesh(domain, rings=int(rest))
    if kind == "file":
        desc = rest
    stem = Path(desc)
    node = stem.with_suffix(".node")
    ele = stem.with_suffix(".ele")
    if node.exists() and ele.exists():
        return parse_mesh(node.read_text(), ele.read_text())
    raise ValueError(f"cannot parse mesh descriptor {desc!r}")


_BC_BUILTINS = {
    "quadratic": lambda x, y: 0.5 * (x**2 + y**2),
    "zero": lambda x, y: 0.0 * np.asarray(x, float),
    "exp-radial": lambda x, y: np.exp((x**2 + y**2) / 2),
}


def parse_bc(desc: str):
    kind, _, rest = desc.partition(":")
    kind = kind.strip().lower()
    if kind == "const":
        v = float(rest)
        return lambda x, y: np.full(np.broadcast(x, y).shape, v)
    if kind == "builtin":
        name = rest.strip().lower()
        if name in _BC_BUILTINS:
            return _BC_BUILTINS[name]
        raise ValueError(f"unknown builtin boundary data {name!r}")
    if kind in _BC_BUILTINS:
        return _BC_BUILTINS[kind]
    raise ValueError(f"cannot parse boundary data descriptor {desc!r}")


def _load_config(args):
    if not getattr(args, "config", None):
        return args
    import tomli

    with open(args.config, "rb") as fh:
        cfg = tomli.load(fh)
    flat = {}
    for k, v in cfg.items():
        if isinstance(v, dict):
            for k2, v2 in v.items():
                flat[f"{k}_{k2}".replace("-", "_")] = v2
        else:
            flat[k.replace("-", "_")] = v
    for key, val in flat.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, val)
    return args


def _write_solution(path, u, diagnostics):
    payload = json.loads(bform_to_json(u))
    doc = {"bform": payload, "diagnostics": diagnostics}
    Path(path).write_text(json.dumps(doc, sort_keys=True, default=fmt))


def cmd_poisson(args):
    args = _load_config(args)
    domain = parse_domain(args.domain)
    mesh = build_mesh(args.mesh or "grid:8", domain)
    space = SplineSpace(mesh, args.degree, args.smoothness, force=args.force)
    f = parse_bc(args.f)
    h = parse_bc(args.bc)
    u = poisson_solve(space, f, h, colloc_degree=args.colloc_degree)
    diag = {"degree": args.degree, "smoothness": args.smoothness,
            "vertices": mesh.n_vertices, "triangles": mesh.n_triangles}
    if args.out:
        _write_solution(args.out, u, diag)
    print(json.dumps(diag, sort_keys=True, default=fmt))
    return 0


def _density(desc, domain):
    return parse_density_descriptor(desc, domain)


def cmd_mae(args):
    args = _load_config(args)
    domain = parse_domain(args.domain)
    mesh = build_mesh(args.mesh or "grid:8", domain)
    space = SplineSpace(mesh, args.degree, args.smoothness, force=args.force)
    dens = DensityPair(_density(args.f, domain),
                       _density(args.g, domain) if args.g else constant_density(1.0))
    h = parse_bc(args.bc)
    cfg = SubharmonicConfig(n_inner=args.iters, n_stages=args.stages,
                            stop_tol=args.tol or 1e-9,
                            colloc_degree=args.colloc_degree)
    u, trace = subharmonic_solve(space, dens, h, cfg)
    diag = iteration_diagnostics(trace, dens)
    diag.update({"iterations": len(trace.k), "vertices": mesh.n_vertices,
                 "triangles": mesh.n_triangles})
    if args.out:
        _write_solution(args.out, u, diag)
    if args.trace:
        Path(args.trace).write_text(trace.to_csv())
    print(json.dumps(diag, sort_keys=True, default=fmt))
    return 0


def cmd_ot(args):
    args = _load_config(args)
    V = parse_domain(args.domain)
    W = parse_domain(args.target_domain)
    mesh = build_mesh(args.mesh or "grid:8", V)
    f = _density(args.f, V)
    if args.g:
        g = _density(args.g, W)
    else:
        from .transport import constant_target_density

        g = constant_target_density(f, mesh, W)
    cfg = TransportConfig(degree=args.degree, smoothness=args.smoothness,
                          colloc_degree=args.colloc_degree,
                          outer_tol=args.tol, max_outer=args.outer_iters or 50)
    if args.iters:
        cfg.inner.n_inner = args.iters
    if args.stages:
        cfg.inner.n_stages = args.stages
    sol = solve_ot(V, mesh, W, DensityPair(f, g), cfg=cfg)
    diag = {
        "converged": sol.converged,
        "outer_iterations": sol.outer_iterations,
        "residual_rmse": sol.residual_rmse,
        "residual_sup": sol.residual_sup,
        "cost": sol.cost,
        "linear_cost": sol.linear_cost,
        "total_cost": sol.total_cost,
        "boundary_match_error": sol.boundary_match_error,
        "convexity_min_eig": sol.convexity_min_eig,
        "coverage": sol.coverage,
        "inside_fraction": sol.inside_fraction,
        "mean_value": sol.mean_value,
        "moved": sol.moved,
        "shift": [sol.shift[0], sol.shift[1]],
    }
    if args.out:
        _write_solution(args.out, sol.u, diag)
    if args.trace:
        Path(args.trace).write_text(sol.trace.to_csv())
    print(json.dumps(diag, sort_keys=True, default=fmt))
    return 0


def cmd_warp(args):
    args = _load_config(args)
    V = parse_domain(args.domain)
    W = parse_domain(args.target_domain) if args.target_domain else V
    mesh = build_mesh(args.mesh or "grid:8", V)
    img = read_pnm(args.image)
    b = V.boundary
    img = img.with_frame(b[:, 0].min(), b[:, 0].max(), b[:, 1].min(), b[:, 1].max())
    if args.potential:
        doc = json.loads(Path(args.potential).read_text())
        u = bform_from_json(json.dumps(doc["bform"]), mesh)
    else:
        f = _density(args.f, V) if args.f else density_from_image_default(img, V)
        if args.g:
            g = _density(args.g, W)
        else:
            from .transport import constant_target_density

            g = constant_target_density(f, mesh, W)
        cfg = TransportConfig(degree=args.degree, smoothness=args.smoothness)
        sol = solve_ot(V, mesh, W, DensityPair(f, g), cfg=cfg)
        u = sol.u
    out, stats = forward_warp(img, u, W, out_resolution=args.resolution)
    write_pnm(out, args.out)
    print(json.dumps(stats, sort_keys=True, default=fmt))
    return 0


def density_from_image_default(img, V):
    from .imaging import density_from_image

    return density_from_image(img, 0.1, V)


def cmd_bench(args):
    suite = bench_mod.BENCH_SUITES.get(args.suite)
    if suite is None:
        raise ValueError(f"unknown bench suite {args.suite!r}")
    rows = suite(quick=args.quick)
    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(fmt(r.get(c, "")) for c in cols))
    csv_text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(csv_text)
    sys.stdout.write(csv_text)
    return 0 if all(r.get("pass", True) for r in rows) else 1


def _common(p, mesh_default=None):
    p.add_argument("--domain", required=True)
    p.add_argument("--mesh", default=mesh_default)
    p.add_argument("--degree", type=int, default=8)
    p.add_argument("--smoothness", type=int, default=2)
    p.add_argument("--colloc-degree", dest="colloc_degree", type=int, default=None)
    p.add_argument("--force", action="store_true")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="splineot",
                                 description="Spline collocation solver for "
                                             "Monge-Ampere / optimal transport")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("poisson", help="linear Poisson solve with Dirichlet data")
    _common(p)
    p.add_argument("--f", required=True, help="source term descriptor")
    p.add_argument("--bc", required=True, help="boundary data descriptor")
    p.set_defaults(fn=cmd_poisson)

    p = sub.add_parser("mae", help="Monge-Ampere with Dirichlet data")
    _common(p)
    p.add_argument("--f", required=True)
    p.add_argument("--g", default=None)
    p.add_argument("--bc", required=True)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--stages", type=int, default=1)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--trace", default=None)
    p.set_defaults(fn=cmd_mae)

    p = sub.add_parser("ot", help="optimal transport via center matching")
    _common(p)
    p.add_argument("--target-domain", dest="target_domain", required=True)
    p.add_argument("--f", required=True)
    p.add_argument("--g", default=None, help="default: uniform with matching mass")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--stages", type=int, default=None)
    p.add_argument("--outer-iters", dest="outer_iters", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--trace", default=None)
    p.set_defaults(fn=cmd_ot)

    p = sub.add_parser("warp", help="warp an image through a transport map")
    _common(p)
    p.add_argument("--target-domain", dest="target_domain", default=None)
    p.add_argument("--image", required=True)
    p.add_argument("--potential", default=None, help="solution JSON from ot/mae")
    p.add_argument("--f", default=None)
    p.add_argument("--g", default=None)
    p.add_argument("--resolution", type=int, default=256)
    p.set_defaults(fn=cmd_warp)

    p = sub.add_parser("bench", help="benchmark suites with reference values")
    p.add_argument("suite", choices=sorted(bench_mod.BENCH_SUITES))
    p.add_argument("--out", default=None)
    p.add_argument("--quick", action="store_true")
    p.set_defaults(fn=cmd_bench)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except _ERRORS as e:
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
