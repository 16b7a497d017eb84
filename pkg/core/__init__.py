"""
Core modules for SourceLens.

This package contains the numerical building blocks shared by the CLI,
the self-test suites and the tests:

Core Structure:
    core/
    ├── errors.py            # SourceLensError hierarchy and warnings
    ├── discretization.py    # DiskGrid: masked grid, stencils, interpolation
    ├── geometry.py          # speed fields, geodesic flow, fans, simplicity
    ├── fiber_calculus.py    # FiberField, eta operators, OpticalParams, S
    ├── transport.py         # free transport, source iteration, measurement
    ├── elliptic.py          # Poisson / dbar / Hodge solvers
    ├── reconstruction.py    # gauge representative, Step 2, finishers
    ├── invariant_suites.py  # self-test suites
    └── experiment_flow.py   # one function per CLI subcommand

``invariant_suites`` and ``experiment_flow`` are imported directly by
their callers; ``experiment_flow`` depends on the top-level ``config``.
"""

from .errors import (
    SourceLensError,
    ConfigError,
    AliasError,
    AdmissibilityError,
    GeometryError,
    NonTrappingError,
    UnboundedConvexityError,
    NumericalFailure,
    NonConvergenceError,
    ConsistencyFailure,
    DegreeOverflowError,
    CompatibilityWarning,
    IllConditionedWarning,
)
from .discretization import DiskGrid
from .fiber_calculus import (
    FiberField,
    OpticalParams,
    synthesize,
    decompose,
    l2_norm,
    inner,
    mode_norms,
    numerical_degree,
    apply_S,
    q_infty,
    accretivity_gap,
    apply_eta,
    apply_X,
    apply_X_perp,
    apply_V,
    apply_X_plus,
    apply_X_minus,
    random_field,
)
from .geometry import (
    DomainSpec,
    SpeedField,
    PhasePoint,
    GeodesicPath,
    SimplicityReport,
    make_profile,
    trace_rays,
    flow,
    exit_time,
    boundary_mu,
    fan_layout,
    convexity_constant,
    santalo_integrate,
    phase_space_integrate,
    simplicity_check,
)
from .transport import (
    BoundaryFan,
    ForwardResult,
    TransportSolver,
    NormBoundReport,
    build_fan,
    attenuated_ray_transform,
    solve_free_transport,
    forward_solve,
    measure,
    norm_bound_check,
    trace_counterexample,
    green_identity_check,
    trace_bound_check,
)
from .elliptic import (
    solve_poisson_dirichlet,
    solve_poisson_neumann,
    solve_dbar_dirichlet,
    hodge_decompose,
    solenoidal_project,
)
from .reconstruction import (
    GaugeRepresentative,
    PipelineState,
    HarnessResult,
    ReconstructionResult,
    DescentReport,
    gauge_generate,
    synthetic_gauge_harness,
    case_harness,
    isotropic_harness,
    polynomial_basis,
    solenoidal_basis,
    recover_representative,
    step2_triangular,
    case1_finish,
    case2_finish,
    general_finish,
    isotropic_case1,
    isotropic_case2,
    iso2_elimination_identity,
    gauge_verify,
    gauge_theorem_check,
    degree_descent_probe,
    reconstruct,
)

__all__ = [
    # Errors
    'SourceLensError',
    'ConfigError',
    'AliasError',
    'AdmissibilityError',
    'GeometryError',
    'NonTrappingError',
    'UnboundedConvexityError',
    'NumericalFailure',
    'NonConvergenceError',
    'ConsistencyFailure',
    'DegreeOverflowError',
    'CompatibilityWarning',
    'IllConditionedWarning',

    # Grid and geometry
    'DiskGrid',
    'DomainSpec',
    'SpeedField',
    'PhasePoint',
    'GeodesicPath',
    'SimplicityReport',
    'make_profile',
    'trace_rays',
    'flow',
    'exit_time',
    'boundary_mu',
    'fan_layout',
    'convexity_constant',
    'santalo_integrate',
    'phase_space_integrate',
    'simplicity_check',

    # Fiber calculus
    'FiberField',
    'OpticalParams',
    'synthesize',
    'decompose',
    'l2_norm',
    'inner',
    'mode_norms',
    'numerical_degree',
    'apply_S',
    'q_infty',
    'accretivity_gap',
    'apply_eta',
    'apply_X',
    'apply_X_perp',
    'apply_V',
    'apply_X_plus',
    'apply_X_minus',
    'random_field',

    # Transport
    'BoundaryFan',
    'ForwardResult',
    'TransportSolver',
    'NormBoundReport',
    'build_fan',
    'attenuated_ray_transform',
    'solve_free_transport',
    'forward_solve',
    'measure',
    'norm_bound_check',
    'trace_counterexample',
    'green_identity_check',
    'trace_bound_check',

    # Elliptic
    'solve_poisson_dirichlet',
    'solve_poisson_neumann',
    'solve_dbar_dirichlet',
    'hodge_decompose',
    'solenoidal_project',

    # Reconstruction
    'GaugeRepresentative',
    'PipelineState',
    'HarnessResult',
    'ReconstructionResult',
    'DescentReport',
    'gauge_generate',
    'synthetic_gauge_harness',
    'case_harness',
    'isotropic_harness',
    'polynomial_basis',
    'solenoidal_basis',
    'recover_representative',
    'step2_triangular',
    'case1_finish',
    'case2_finish',
    'general_finish',
    'isotropic_case1',
    'isotropic_case2',
    'iso2_elimination_identity',
    'gauge_verify',
    'gauge_theorem_check',
    'degree_descent_probe',
    'reconstruct',
]
