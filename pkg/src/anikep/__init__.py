"""Regularized collision dynamics and variational collision arcs.

Toolkit for planar (and general-dimension) anisotropic Kepler-type potentials
V = r^(-alpha) U(theta): McGehee-regularized flows, collision-manifold
equilibria and their classification, local stable-manifold charts, and
collision arcs obtained as minimizers of the Maupertuis functional, together
with a scenario harness that cross-checks the dynamical and variational
constructions against each other.
"""

__version__ = "0.1.0"

from .equilibria import (
    Classification,
    EquilibriumRecord,
    classify,
    eigen_3d,
    eigen_collision,
    equilibrium_records,
    jacobian_collision,
    tangency_direction,
)
from .manifold import (
    CoverageError,
    MembershipVerdict,
    StableChart,
    build_chart,
    chart_query,
    default_cone_halfwidth,
    default_r_loc,
    stable_membership,
)
from .mcgehee import (
    REASON_ANGLE,
    REASON_CONVERGED,
    REASON_HORIZON,
    REASON_RADIUS,
    REASON_STEP_FAILURE,
    CartesianState,
    GeneralState,
    McGeheeState,
    Trajectory,
    energy_residuals,
    field_3d,
    field_collision,
    field_general,
    from_mcgehee,
    general_from_planar,
    integrate,
    lift_planar,
    physical_time,
    shell_residual,
    speed_scale,
    sundman_values,
    to_mcgehee,
    write_trajectory_csv,
)
from .potential import (
    AngularPotential,
    CentralConfiguration,
    CentralConfigurationSet,
    PerturbationSpec,
    PotentialSpec,
    central_configurations,
    eval_V,
    grad_V,
    hess_V,
    hill_region_contains,
    lagrange_jacobi_radius,
)
from .variational import (
    ConvergenceReport,
    DiscretePath,
    MinimizationResult,
    PhysicalArc,
    asymptotic_fit,
    convergence_study,
    graded_grid,
    h1_distance,
    homothetic_path,
    jacobi_length,
    maupertuis_gradient,
    maupertuis_value,
    minimize_collision_arc,
    omega,
    omega_h,
    psi_h,
    sup_distance,
    to_physical,
)

__all__ = [
    "__version__",
    "AngularPotential",
    "CartesianState",
    "CentralConfiguration",
    "CentralConfigurationSet",
    "Classification",
    "ConvergenceReport",
    "CoverageError",
    "DiscretePath",
    "EquilibriumRecord",
    "GeneralState",
    "McGeheeState",
    "MembershipVerdict",
    "MinimizationResult",
    "PerturbationSpec",
    "PhysicalArc",
    "PotentialSpec",
    "REASON_ANGLE",
    "REASON_CONVERGED",
    "REASON_HORIZON",
    "REASON_RADIUS",
    "REASON_STEP_FAILURE",
    "StableChart",
    "Trajectory",
    "asymptotic_fit",
    "build_chart",
    "central_configurations",
    "chart_query",
    "classify",
    "convergence_study",
    "default_cone_halfwidth",
    "default_r_loc",
    "eigen_3d",
    "eigen_collision",
    "energy_residuals",
    "equilibrium_records",
    "eval_V",
    "field_3d",
    "field_collision",
    "field_general",
    "from_mcgehee",
    "general_from_planar",
    "grad_V",
    "graded_grid",
    "h1_distance",
    "hess_V",
    "hill_region_contains",
    "homothetic_path",
    "integrate",
    "jacobi_length",
    "jacobian_collision",
    "lagrange_jacobi_radius",
    "lift_planar",
    "maupertuis_gradient",
    "maupertuis_value",
    "minimize_collision_arc",
    "omega",
    "omega_h",
    "physical_time",
    "psi_h",
    "shell_residual",
    "speed_scale",
    "stable_membership",
    "sundman_values",
    "sup_distance",
    "tangency_direction",
    "to_mcgehee",
    "to_physical",
    "write_trajectory_csv",
]
