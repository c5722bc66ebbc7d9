"""Center matching for the second (transport) boundary condition.

Outer loop: freeze boundary targets by intersecting rays from the shared
center through grad u^k with the target boundary, then run one subharmonic
stage with normal-derivative rows and the hard mean-value constraint; repeat
until u stops moving.  The Brenier certificates (convexity, boundary match,
onto coverage, small residual) are computed on the final iterate.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import assemble_neumann, mae_residual, mean_value_row
from .bbspline import BForm, SplineSpace
from .densities import Density, DensityPair
from .lsq import ConstrainedLS
from .mae import CollocationOperator, IterationTrace, SubharmonicConfig, run_stages, _initial_coeffs
from .mesh import StarDomain, Triangulation, boundary_collocation, polyline_distance, ray_exit_point
from .quadrature import mesh_quadrature


@dataclass
class TransportProblem:
    domain: StarDomain
    mesh: Triangulation
    target: StarDomain
    densities: DensityPair
    mass_tol: float = 1e-6

    def __post_init__(self):
        if self.densities.f.lower <= 0:
            raise ValueError("transport requires a strictly positive source density")

    def normalize(self, order: int = 20) -> "TransportProblem":
        """Rescale g so the f and g masses balance exactly."""
        mf = integrate_density(self.densities.f, self.mesh)
        mg = integrate_over_polygon(self.densities.g, self.target, order)
        scale = mf / mg
        g = self.densities.g
        gs = Density(lambda x, y, _g=g.fn, _s=scale: _s * np.asarray(_g(x, y), float),
                     scale * g.lower, scale * g.upper, g.label)
        return TransportProblem(self.domain, self.mesh, self.target,
                                DensityPair(self.densities.f, gs), self.mass_tol)

    def mass_imbalance(self, order: int = 20) -> float:
        mf = integrate_density(self.densities.f, self.mesh)
        mg = integrate_over_polygon(self.densities.g, self.target, order)
        return abs(mf - mg) / max(abs(mf), abs(mg))


def integrate_density(f, mesh: Triangulation, order: int = 20) -> float:
    pts, w, _, _ = mesh_quadrature(mesh, order)
    return float(w @ f(pts[:, 0], pts[:, 1]))


def integrate_over_polygon(f, domain: StarDomain, order: int = 20) -> float:
    """Quadrature over the fan triangulation of a star polygon."""
    bnd = domain.boundary
    c = domain.center
    total = 0.0
    from .quadrature import triangle_rule

    bary, w = triangle_rule(order)
    for i in range(len(bnd)):
        a, b = bnd[i], bnd[(i + 1) % len(bnd)]
        area = 0.5 * abs((a[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (a[1] - c[1]))
        pts = bary @ np.array([c, a, b])
        total += area * float(w @ f(pts[:, 0], pts[:, 1]))
    return total


def constant_target_density(f: Density, mesh: Triangulation, target: StarDomain) -> Density:
    """Uniform target with the same total mass as f: g = (integral f)/A(W)."""
    if target.area <= 0:
        raise ValueError("target area must be positive")
    g = integrate_density(f, mesh) / target.area
    return Density(lambda x, y, _g=g: np.full(np.broadcast(x, y).shape, _g), g, g,
                   f"const:{g:.17g}")


def pretranslate(V: StarDomain, W: StarDomain):
    """Align centers by shifting the cheaper domain.

    Returns (shift, moved, linear_cost): `moved` is 'V', 'W' or None; the
    shift is the vector to ADD to the moved domain; the linear cost is
    |x0-y0|^2 times the moved domain's area.
    """
    z = W.center - V.center
    d2 = float(z @ z)
    if d2 == 0.0:
        return np.zeros(2), None, 0.0
    if V.area <= W.area:
        return z, "V", d2 * V.area
    return -z, "W", d2 * W.area


def center_match_targets(W: StarDomain, boundary_points, grads) -> np.ndarray:
    """Target boundary points: exit of the ray from the center through grad u.

    Degenerate gradients (at the center) fall back to the ray through the
    source boundary point itself.
    """
    bp = np.asarray(boundary_points, float).reshape(-1, 2)
    gr = np.asarray(grads, float).reshape(-1, 2)
    wc = W.center
    dirs = gr - wc
    deg = np.hypot(dirs[:, 0], dirs[:, 1]) <= 1e-10
    fallback = bp - wc
    dirs = np.where(deg[:, None], fallback, dirs)
    ang = np.arctan2(dirs[:, 1], dirs[:, 0])
    return np.array([ray_exit_point(W, a) for a in ang])


@dataclass
class TransportConfig:
    degree: int = 8
    smoothness: int = 2
    colloc_degree: Optional[int] = None
    outer_tol: Optional[float] = None
    max_outer: int = 50
    inner: SubharmonicConfig = field(default_factory=lambda: SubharmonicConfig(
        n_inner=40, n_stages=1, inner_to_tol=True))
    residual_grid: int = 512
    initial_guess = "quadratic"


@dataclass
class TransportSolution:
    u: BForm
    converged: bool
    outer_iterations: int
    residual_rmse: float
    residual_sup: float
    cost: float
    boundary_match_error: float
    convexity_min_eig: float
    coverage: float
    inside_fraction: float
    mean_value: float
    trace: IterationTrace
    shift: np.ndarray = field(default_factory=lambda: np.zeros(2))
    moved: Optional[str] = None
    linear_cost: float = 0.0

    @property
    def total_cost(self) -> float:
        return self.linear_cost + self.cost

    def map_points(self, points) -> np.ndarray:
        """Transport map on the ORIGINAL source domain (pretranslation folded in)."""
        p = np.asarray(points, float).reshape(-1, 2)
        if self.moved == "V":
            p = p + self.shift
        out = self.u.grad(p)
        if self.moved == "W":
            out = out - self.shift
        return out


def solve_transport(problem: TransportProblem, space: SplineSpace,
                    cfg: Optional[TransportConfig] = None) -> TransportSolution:
    """Center-matching loop; expects coinciding centers (see solve_ot)."""
    cfg = cfg or TransportConfig()
    V, W = problem.domain, problem.target
    if np.linalg.norm(V.center - W.center) > 1e-9 * max(V.diameter, W.diameter):
        raise ValueError("centers do not coincide; apply pretranslate first (or use solve_ot)")
    dens = problem.densities
    op = CollocationOperator(space, cfg.colloc_degree)
    bp, bn, _ = boundary_collocation(V, space.mesh, op.colloc_degree)
    Bn, _ = assemble_neumann(space, bp, bn)
    mrow = mean_value_row(space)
    solver = ConstrainedLS(op.K, B=Bn, H=op.H, mean_row=mrow,
                           alpha=cfg.inner.alpha, beta=cfg.inner.beta, eps1=cfg.inner.eps1)
    coeffs = _initial_coeffs(space, cfg.inner.initial_guess)
    btri, bbary = space.locate(bp)
    trace = IterationTrace()
    trace.growth_base = 2.0 * float(np.sqrt(dens.f.upper / dens.g.lower))

    stage_cfg = SubharmonicConfig(
        n_inner=cfg.inner.n_inner, n_stages=1, stop_tol=cfg.inner.stop_tol,
        blowup_cap=cfg.inner.blowup_cap, initial_guess=cfg.inner.initial_guess,
        colloc_degree=op.colloc_degree, alpha=cfg.inner.alpha, beta=cfg.inner.beta,
        eps1=cfg.inner.eps1, inner_to_tol=cfg.inner.inner_to_tol)

    converged = False
    outer = 0
    du = np.inf
    for outer in range(1, cfg.max_outer + 1):
        grads = space.eval_located(coeffs, btri, bbary, order=1)[:, 1:3]
        targets = center_match_targets(W, bp, grads)
        rhs_B = np.einsum("ij,ij->i", targets, bn)
        prev = coeffs
        coeffs = run_stages(op, solver, dens, rhs_B, stage_cfg, coeffs, trace,
                            mean_target=0.0, stage_offset=outer - 1)
        vals = space.eval_located(coeffs - prev, op.tri, op.bary, 0)[:, 0]
        du = float(np.abs(vals).max())
        tol = cfg.outer_tol
        if tol is None:
            sup_u = float(np.abs(space.eval_located(coeffs, op.tri, op.bary, 0)[:, 0]).max())
            tol = 1e-8 * (1.0 + sup_u)
        if du <= tol:
            converged = True
            break

    u = BForm(space, coeffs)
    sol = _certify(problem, u, cfg)
    sol.converged = converged
    sol.outer_iterations = outer
    sol.trace = trace
    return sol


def _grid_in_domain(space: SplineSpace, V: StarDomain, n: int):
    xs = np.linspace(V.boundary[:, 0].min(), V.boundary[:, 0].max(), n)
    ys = np.linspace(V.boundary[:, 1].min(), V.boundary[:, 1].max(), n)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    tri, bary = space.locate(pts)
    ins = tri >= 0
    return pts[ins], tri[ins], bary[ins]


def surjectivity_coverage(images: np.ndarray, W: StarDomain, cells: int = 25):
    """(covered fraction of W cells, fraction of images inside dilated W)."""
    x0, y0 = W.boundary.min(axis=0)
    x1, y1 = W.boundary.max(axis=0)
    ix = np.clip(((images[:, 0] - x0) / (x1 - x0) * cells).astype(int), 0, cells - 1)
    iy = np.clip(((images[:, 1] - y0) / (y1 - y0) * cells).astype(int), 0, cells - 1)
    hit = np.zeros((cells, cells), bool)
    hit[ix, iy] = True
    cx, cy = np.meshgrid(
        x0 + (np.arange(cells) + 0.5) * (x1 - x0) / cells,
        y0 + (np.arange(cells) + 0.5) * (y1 - y0) / cells,
        indexing="ij",
    )
    inside_cells = W.contains(cx.ravel(), cy.ravel()).reshape(cells, cells)
    covered = float(hit[inside_cells].sum()) / max(1, int(inside_cells.sum()))
    margin = 1e-2 * W.diameter
    near = polyline_distance(images, W.boundary) <= margin
    inside = W.contains(images[:, 0], images[:, 1]) | near
    return covered, float(inside.mean())


def transport_cost(u: BForm, f, order: Optional[int] = None) -> float:
    """Quadratic transport cost of the gradient map against density f."""
    space = u.space
    order = order or 2 * space.degree
    pts, w, tri, bary = mesh_quadrature(space.mesh, order)
    g = space.eval_located(u.coeffs, tri, bary, order=1)[:, 1:3]
    fv = np.asarray(f(pts[:, 0], pts[:, 1]), float)
    fv = np.broadcast_to(fv, (len(pts),))
    return float(w @ (((pts - g) ** 2).sum(axis=1) * fv))


def _certify(problem: TransportProblem, u: BForm, cfg: TransportConfig) -> TransportSolution:
    space = u.space
    V, W = problem.domain, problem.target
    dens = problem.densities

    gp, gt, gb = _grid_in_domain(space, V, cfg.residual_grid)
    rmse, sup, _ = mae_residual(u, dens, gp, gt, gb)

    sp, st, sb = _grid_in_domain(space, V, 51)
    f51 = space.eval_located(u.coeffs, st, sb, order=2)
    lam = 0.5 * (f51[:, 3] + f51[:, 5]) - np.sqrt(
        0.25 * (f51[:, 3] - f51[:, 5]) ** 2 + f51[:, 4] ** 2
    )

    cp, ct, cb = _grid_in_domain(space, V, 101)
    images = space.eval_located(u.coeffs, ct, cb, order=1)[:, 1:3]
    coverage, inside = surjectivity_coverage(images, W)

    bpairs = boundary_collocation(V, space.mesh, space.degree)
    bgrad = u.grad(bpairs[0])
    bmatch = float(polyline_distance(bgrad, W.boundary).max())

    cost = transport_cost(u, dens.f)
    mean_val = float(mean_value_row(space) @ u.coeffs)
    return TransportSolution(
        u=u, converged=False, outer_iterations=0,
        residual_rmse=rmse, residual_sup=sup, cost=cost,
        boundary_match_error=bmatch, convexity_min_eig=float(lam.min()),
        coverage=coverage, inside_fraction=inside, mean_value=mean_val,
        trace=IterationTrace(),
    )


def solve_ot(V: StarDomain, mesh: Triangulation, W: StarDomain, densities: DensityPair,
             degree: int = 8, smoothness: int = 2,
             cfg: Optional[TransportConfig] = None,
             normalize: bool = True) -> TransportSolution:
    """End-to-end driver: mass balance, pretranslation, center matching.

    The returned solution's map_points() acts on the original source domain.
    """
    problem = TransportProblem(V, mesh, W, densities)
    if normalize:
        problem = problem.normalize()
    if problem.mass_imbalance() > problem.mass_tol:
        raise ValueError(f"density masses do not balance: {problem.mass_imbalance():.3e}")

    shift, moved, lin_cost = pretranslate(V, W)
    dens = problem.densities
    if moved == "V":
        f = dens.f
        fs = Density(lambda x, y, _f=f.fn, _z=shift: np.asarray(_f(x - _z[0], y - _z[1]), float),
                     f.lower, f.upper, f.label)
        problem = TransportProblem(V.translate(shift), mesh.translate(shift), W,
                                   DensityPair(fs, dens.g))
    elif moved == "W":
        g = dens.g
        gs = Density(lambda x, y, _g=g.fn, _z=shift: np.asarray(_g(x - _z[0], y - _z[1]), float),
                     g.lower, g.upper, g.label)
        problem = TransportProblem(V, mesh, W.translate(shift), DensityPair(dens.f, gs))

    cfg = cfg or TransportConfig(degree=degree, smoothness=smoothness)
    space = SplineSpace(problem.mesh, cfg.degree, cfg.smoothness)
    sol = solve_transport(problem, space, cfg)
    sol.shift = shift
    sol.moved = moved
    sol.linear_cost = lin_cost
    return sol
