"""Numerical laboratory for stable solutions of ``Lap_f u + g(u) = 0`` on weighted model manifolds."""

__version__ = "0.1.0"

from .model_space import (
    DensitySpec,
    Exhaustion,
    Family,
    ModelSpace,
    Region,
    ball_volumes,
    boundary_area,
    weighted_volume,
)
from .field_calculus import (
    ScalarField,
    SymmetricTensorField,
    VectorField,
    bochner_residual,
    drift_laplacian,
    gradient,
    hessian,
    weighted_dirichlet,
    weighted_inner,
)

from .semilinear import (
    Nonlinearity,
    NumericalFailure,
    SolveOutcome,
    energy,
    initial_guess,
    newton_solve,
    pde_residual,
)
from .stability import (
    Positivity,
    SpectralReport,
    integral_inequality_gap,
    min_eigenpair,
    picone_gap,
    rigidity_gap,
    stability_form,
)
from .rigidity import (
    SplittingReport,
    curvature_condition,
    flow_audit,
    kato_decomposition,
    lambda_field,
    level_set_sample,
    lie_derivative_residual,
    splitting_audit,
    umbilicity_defect,
)
from .capacity import (
    ParabolicityVerdict,
    capacity_limit,
    parabolicity_by_capacity,
    parabolicity_by_growth,
    solve_capacitor,
)
from .profile_growth import (
    ProfileSolution,
    cutoff_energy,
    growth_diagnostic,
    log_cutoff,
    log_cutoff_gradientsq,
    ode_residual,
    solve_profile,
)
