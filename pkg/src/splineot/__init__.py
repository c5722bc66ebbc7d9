"""Bivariate Bernstein-Bezier spline collocation for Monge-Ampere equations
and quadratic-cost optimal transport maps."""

from .mesh import (
    MeshError,
    Point2,
    StarDomain,
    StarShapeError,
    Triangulation,
    boundary_collocation,
    make_star_domain,
    parse_mesh,
    ray_exit_point,
)
from .bbspline import (
    BForm,
    DomainPointSet,
    OutOfDomainError,
    SplineSpace,
    basis_derivative_row,
    bform_from_json,
    bform_to_json,
    domain_points,
    eval_bform,
    hessian_det_lap,
    integral_bform,
)
from .assembly import (
    CollocationSystem,
    assemble_dirichlet,
    assemble_laplace,
    assemble_neumann,
    mae_residual,
    mae_rhs,
    mean_value_row,
    smoothness_matrix,
)
from .densities import Density, DensityPair, DensityRangeError, gaussian_density
from .lsq import ConstrainedLS, InfeasibleError, SolveReport, solve_equality_ls
from .mae import (
    BlowupError,
    IterationTrace,
    SubharmonicConfig,
    iteration_diagnostics,
    poisson_solve,
    subharmonic_solve,
)
from .transport import (
    TransportConfig,
    TransportProblem,
    TransportSolution,
    center_match_targets,
    constant_target_density,
    pretranslate,
    solve_ot,
    solve_transport,
    transport_cost,
)
from .imaging import (
    GeoFrame,
    MapQualityError,
    PNMError,
    RasterImage,
    density_from_image,
    forward_warp,
    psnr,
    read_pnm,
    write_pnm,
)

__version__ = "0.1.0"
