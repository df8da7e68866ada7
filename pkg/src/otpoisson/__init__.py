"""Optimal control of the Poisson equation with measure controls and
optimal-transport regularization toward a prior."""

from .errors import (
    ConvergenceError,
    DomainError,
    EmptyRegionError,
    InsufficientDataError,
    InvalidParameterError,
    MassMismatchError,
    SeparationError,
    ShapeMismatchError,
    WrongModelError,
)
from .geometry import Domain, Grid, build_grid, candidate_points
from .measures import (
    AtomReport,
    DensityEstimate,
    DiscreteMeasure,
    boundary_mass,
    detect_atoms,
    estimate_density,
    pushforward,
    support,
)
from .pde import (
    FDPoissonBackend,
    GreenDiskBackend,
    ScalarField,
    VectorField,
    backend_for_domain,
    gradient_field,
    green_potential,
    make_backend,
    quad_inner,
    solve_adjoint,
    solve_state,
)
from .transport import (
    CostMatrix,
    CostModel,
    DualPotentials,
    TransportPlan,
    c_bar_transform,
    cost_matrix,
    duality_gap,
    eval_F,
    eval_transport_distance,
    solve_kantorovich_exact,
    solve_sinkhorn,
)
from .control import (
    ControlProblem,
    SolveReport,
    fw_vertex,
    fw_vertex_assignment,
    gradient_wrt_plan,
    make_control_problem,
    objective,
    solve_control,
)
from .structure import (
    AnnulusReference,
    CertificateReport,
    CheckResult,
    CurvatureReport,
    DensityBoundReport,
    MapExtraction,
    RayReport,
    SparsityThreshold,
    StateBoundReport,
    build_annulus_example,
    build_sparsity_example,
    check_curvature,
    check_density_bound,
    check_optimality,
    check_state_bounds,
    check_support_inclusion,
    check_transport_rays,
    discrete_lipschitz,
    extract_transport_map,
    ring_band_mass_fraction,
    sparsity_threshold,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
