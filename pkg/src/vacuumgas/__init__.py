"""Lagrangian free-boundary gas dynamics with a physical vacuum interface.

The flow map of a compressible gas column with vacuum faces is evolved on the
fixed slab T^(dim-1) x (0,1); a degenerate artificial-viscosity term (the
kappa regularization) can be switched on, and the structural properties of
the system -- geometric identities, energy boundedness, vorticity transport,
the kappa -> 0 limit, and the weighted functional inequalities that control
the vacuum degeneracy -- are all numerically checkable.
"""

from .diagnostics import (
    BoundaryTrace,
    EnergyReport,
    boundary_trace,
    curl_transport_residual,
    energy_functional,
    fit_growth_constant,
    physical_energy,
)
from .eos import (
    DensityProfile,
    EosParams,
    ProfileError,
    check_physical_vacuum,
    density_profile,
    mollify_initial_data,
    pressure,
    sound_speed_sq,
)
from .geometry import (
    FlowState,
    GeometrySnapshot,
    cofactor_rate,
    curlcurl_identity_residual,
    lagrangian_curl,
    lagrangian_div,
    piola_residual,
    snapshot,
)
from .grid import DiscreteDomain, build_domain, diff, sobolev_norm, weighted_norm
from .harness import (
    AffineReference,
    RunConfig,
    StudyResult,
    affine_oracle,
    identity_suite,
    initial_velocity,
    kappa_sweep,
    refinement_study,
    smooth_test_map,
)
from .inequalities import (
    InequalityReport,
    hardy_ratio,
    kelliptic_solve,
    weighted_embedding_ratio,
)
from .solver import (
    SolverAbort,
    SolverConfig,
    Trajectory,
    force_field,
    initial_acceleration,
    initial_state,
    run,
    stable_dt,
    step,
)
from .xsolver import (
    XProblem,
    XSolution,
    build_xproblem,
    consistency_check,
    solve_x,
    solve_x_galerkin,
    x_from_flow,
)

__version__ = "0.1.0"
